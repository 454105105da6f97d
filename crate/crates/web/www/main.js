import init, { qsd_trajectory, dp_sweep, cq_trajectory } from "./pkg/collapse_lab_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

function rows(flat, width) {
  const out = [];
  for (let i = 0; i < flat.length; i += width) out.push(Array.from(flat.slice(i, i + width)));
  return out;
}

// series: [{ xs, ys, color, step }]
function plot(canvas, series, { xlabel, ylabel, logx = false, logy = false, ymin, ymax }) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 60, R = 10, T = 10, B = 36;
  ctx.clearRect(0, 0, W, H);
  const tx = logx ? Math.log10 : (v) => v;
  const ty = logy ? Math.log10 : (v) => v;
  const xs = series.flatMap((s) => s.xs.map(tx));
  const ys = series.flatMap((s) => s.ys.map(ty)).filter(Number.isFinite);
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  const y0 = ymin ?? Math.min(...ys), y1 = ymax ?? Math.max(...ys);
  const px = (v) => L + ((tx(v) - x0) / (x1 - x0 || 1)) * (W - L - R);
  const py = (v) => H - B - ((ty(v) - y0) / (y1 - y0 || 1)) * (H - T - B);

  ctx.strokeStyle = "#888";
  ctx.strokeRect(L, T, W - L - R, H - T - B);
  ctx.fillStyle = "#222";
  ctx.font = "12px sans-serif";
  const fmt = (v, log) => (log ? "1e" + v.toFixed(0) : +v.toPrecision(3));
  ctx.textAlign = "center";
  for (let k = 0; k <= 4; k++) {
    const v = x0 + ((x1 - x0) * k) / 4;
    ctx.fillText(fmt(v, logx), L + ((W - L - R) * k) / 4, H - B + 14);
  }
  ctx.fillText(xlabel, (W + L) / 2, H - 4);
  ctx.textAlign = "right";
  for (let k = 0; k <= 4; k++) {
    const v = y0 + ((y1 - y0) * k) / 4;
    ctx.fillText(fmt(v, logy), L - 4, H - B - ((H - T - B) * k) / 4 + 4);
  }
  ctx.save();
  ctx.translate(12, (H - B) / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.textAlign = "center";
  ctx.fillText(ylabel, 0, 0);
  ctx.restore();

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    s.xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(s.ys[i])) : ctx.moveTo(px(x), py(s.ys[i]))));
    ctx.stroke();
  }
}

function bindValue(id) {
  const input = document.getElementById(id);
  const out = document.getElementById(id + "-val");
  input.addEventListener("input", () => (out.value = input.value));
  return input;
}

function runQsd() {
  const eta = +document.getElementById("qsd-eta").value;
  const seed = BigInt(document.getElementById("qsd-seed").value || 0);
  const r = rows(qsd_trajectory(eta, seed, 100.0), 4);
  const t = r.map((row) => row[0]);
  plot(
    document.getElementById("qsd-plot"),
    [1, 2, 3].map((k) => ({ xs: t, ys: r.map((row) => row[k]), color: COLORS[k - 1] })),
    { xlabel: "t (fs)", ylabel: "population", ymin: 0, ymax: 1 },
  );
}

function runDp() {
  const dx = +document.getElementById("dp-dx").value;
  const sigma = +document.getElementById("dp-sigma").value;
  const info = document.getElementById("dp-info");
  try {
    const r = rows(dp_sweep(dx, sigma, 1e-26, 100, 15), 2);
    info.value = "";
    plot(
      document.getElementById("dp-plot"),
      [{ xs: r.map((row) => row[0]), ys: r.map((row) => row[1]), color: COLORS[0] }],
      { xlabel: "mass (kg)", ylabel: "collapse time (s)", logx: true, logy: true },
    );
  } catch (e) {
    info.value = String(e);
  }
}

function runCq() {
  const p0 = +document.getElementById("cq-p0").value;
  const tau = +document.getElementById("cq-tau").value;
  const seed = BigInt(document.getElementById("cq-seed").value || 0);
  const r = rows(cq_trajectory(p0, tau, seed), 6);
  const t = r.map((row) => row[0]);
  const q = r.map((row) => row[3]);
  const qmax = Math.max(1e-12, ...q.map(Math.abs));
  plot(
    document.getElementById("cq-plot"),
    [
      { xs: t, ys: r.map((row) => row[1]), color: COLORS[0] },
      { xs: t, ys: q.map((v) => 0.5 + v / (2 * qmax)), color: COLORS[1] },
    ],
    { xlabel: "t (s)", ylabel: "pop |0>  /  q (rescaled)", ymin: 0, ymax: 1 },
  );
}

await init();
bindValue("qsd-eta").addEventListener("change", runQsd);
bindValue("cq-p0").addEventListener("change", runCq);
document.getElementById("qsd-run").addEventListener("click", runQsd);
document.getElementById("dp-run").addEventListener("click", runDp);
document.getElementById("cq-run").addEventListener("click", runCq);
runQsd();
runDp();
runCq();
