// Build the wasm package first: wasm-pack build --target web --out-dir www/pkg
import init, { marginalDensity, copulaScatter, twoMoonsRun } from "./pkg/guided_abc_web.js";

const FAMILIES = ["triangular", "location_scale_t", "logistic", "gumbel", "uniform", "normal"];
const COLORS = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#444"];

const $ = (id) => document.getElementById(id);

function showError(el, err) {
  el.innerHTML = `<span class="error">${String(err)}</span>`;
}

function drawMarginals() {
  const canvas = $("marginals");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const mean = Number($("m-mean").value);
  const variance = Number($("m-var").value);
  const sd = Math.sqrt(Math.max(variance, 1e-6));
  const xs = Array.from({ length: 400 }, (_, i) => mean - 4 * sd + (8 * sd * i) / 399);
  let curves;
  try {
    curves = FAMILIES.map((f) => marginalDensity(f, mean, variance, Float64Array.from(xs)));
  } catch (err) {
    showError($("m-legend"), err);
    return;
  }
  const ymax = Math.max(...curves.map((c) => Math.max(...c))) * 1.05;
  curves.forEach((c, k) => {
    ctx.strokeStyle = COLORS[k];
    ctx.beginPath();
    c.forEach((y, i) => {
      const px = (i / 399) * canvas.width;
      const py = canvas.height - (y / ymax) * canvas.height;
      i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
    });
    ctx.stroke();
  });
  $("m-legend").innerHTML = FAMILIES.map((f, k) => `<span style="color:${COLORS[k]}">${f}</span>`).join(" &middot; ");
}

function drawScatter() {
  const canvas = $("scatter");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const rho = Number($("c-rho").value);
  $("c-rho-value").textContent = rho.toFixed(2);
  let pts;
  try {
    pts = copulaScatter($("c-copula").value, $("c-family").value, rho, 3000, 7);
  } catch (err) {
    ctx.fillText(String(err), 10, 20);
    return;
  }
  const scale = canvas.width / 8;
  ctx.fillStyle = "rgba(40, 80, 160, 0.35)";
  for (let i = 0; i < pts.length; i += 2) {
    ctx.fillRect(canvas.width / 2 + pts[i] * scale, canvas.height / 2 - pts[i + 1] * scale, 2, 2);
  }
}

let lastRun = null;

function drawIteration() {
  if (!lastRun) return;
  const it = lastRun.iterations[Number($("r-iter").value) - 1];
  const canvas = $("moons");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const wmax = Math.max(...it.weights);
  for (let i = 0; i < it.weights.length; i++) {
    const x = ((it.thetas[2 * i] + 1) / 2) * canvas.width;
    const y = canvas.height - ((it.thetas[2 * i + 1] + 1) / 2) * canvas.height;
    ctx.fillStyle = `rgba(200, 60, 30, ${0.15 + 0.85 * it.weights[i] / wmax})`;
    ctx.fillRect(x - 1, y - 1, 3, 3);
  }
}

function runMoons() {
  const log = $("run-log");
  const deltas = $("r-deltas").value.split(",").map(Number);
  try {
    lastRun = JSON.parse(twoMoonsRun($("r-kind").value, Number($("r-n").value), Float64Array.from(deltas), 1));
  } catch (err) {
    showError(log, err);
    return;
  }
  const rows = lastRun.iterations.map(
    (it) => `t=${it.t}  delta=${it.delta.toFixed(3)}  acceptance=${it.acceptance_rate.toFixed(4)}  ess=${it.ess.toFixed(1)}  sims=${it.n_sims}`,
  );
  log.textContent = `${lastRun.proposal} (${lastRun.stop_reason})\n${rows.join("\n")}`;
  const slider = $("r-iter");
  slider.max = lastRun.iterations.length;
  slider.value = lastRun.iterations.length;
  drawIteration();
}

await init();
["m-mean", "m-var"].forEach((id) => $(id).addEventListener("input", drawMarginals));
["c-copula", "c-family", "c-rho"].forEach((id) => $(id).addEventListener("input", drawScatter));
$("r-go").addEventListener("click", runMoons);
$("r-iter").addEventListener("input", drawIteration);
drawMarginals();
drawScatter();
