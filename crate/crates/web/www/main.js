import init, { regularize, transport, entropic } from "./pkg/llot_web.js";

const $ = (id) => document.getElementById(id);

function fmt(v) {
  if (typeof v !== "number") return String(v);
  return Math.abs(v) >= 1e-3 && Math.abs(v) < 1e4 ? v.toFixed(6) : v.toExponential(3);
}

function table(el, rows) {
  el.innerHTML = rows.map(([k, v]) => `<tr><td>${k}</td><td>${fmt(v)}</td></tr>`).join("");
}

function showError(e) {
  $("error").textContent = e ? `error: ${e.message ?? e}` : "";
}

function drawDensity(canvas, x, rho, recovered) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const top = Math.max(...rho, ...recovered) * 1.1;
  const px = (i) => (i / (x.length - 1)) * (w - 20) + 10;
  const py = (v) => h - 10 - (v / top) * (h - 20);
  ctx.fillStyle = "#9cc3e6";
  const bar = (w - 20) / x.length;
  rho.forEach((v, i) => ctx.fillRect(px(i) - bar / 2, py(v), bar, h - 10 - py(v)));
  ctx.strokeStyle = "#c0392b";
  ctx.lineWidth = 2;
  ctx.beginPath();
  recovered.forEach((v, i) => (i ? ctx.lineTo(px(i), py(v)) : ctx.moveTo(px(i), py(v))));
  ctx.stroke();
}

function drawHeat(canvas, heat, NODES) {
  const img = new ImageData(NODES, NODES);
  const top = Math.max(...heat) || 1;
  heat.forEach((v, k) => {
    const a = Math.floor(k / NODES);
    const b = k % NODES;
    const t = Math.sqrt(v / top);
    const p = 4 * ((NODES - 1 - b) * NODES + a);
    img.data[p] = 255 * t;
    img.data[p + 1] = 255 * t * t;
    img.data[p + 2] = 80 * (1 - t) + 40;
    img.data[p + 3] = 255;
  });
  const off = new OffscreenCanvas(NODES, NODES);
  off.getContext("2d").putImageData(img, 0, 0);
  const ctx = canvas.getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function drawPlan(canvas, sites, atoms) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const px = (x) => (sites > 1 ? (x / (sites - 1)) * (w - 40) + 20 : w / 2);
  const base = h - 30;
  atoms.forEach((a) => {
    const xs = [...a.x].sort((p, q) => p - q);
    ctx.strokeStyle = "rgba(41, 98, 155, 0.8)";
    ctx.lineWidth = 1 + 12 * a.w;
    for (let k = 0; k + 1 < xs.length; k++) {
      const mid = (px(xs[k]) + px(xs[k + 1])) / 2;
      const r = (px(xs[k + 1]) - px(xs[k])) / 2;
      ctx.beginPath();
      ctx.arc(mid, base, r, Math.PI, 2 * Math.PI);
      ctx.stroke();
    }
  });
  ctx.fillStyle = "#222";
  for (let s = 0; s < sites; s++) {
    ctx.beginPath();
    ctx.arc(px(s), base, 4, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillText(String(s), px(s) - 3, base + 18);
  }
}

function runRegularize() {
  const shift = Number($("shift").value);
  const width = Number($("width").value);
  const eps = Number($("eps").value) / 96;
  try {
    const r = JSON.parse(regularize(shift, width, eps));
    drawDensity($("density"), r.x, r.rho, r.recovered);
    drawHeat($("heat"), r.heat, r.nodes);
    table($("reg-table"), [
      ["separation α̂", r.separation],
      ["ε", eps],
      ["‖ρ − marginal of P_ε‖₁", r.l1],
      ["Tr Γ_ε", r.trace],
      ["∫|∇√P_ε|²", r.kinetic_sqrt],
      ["Tr(−ΔΓ_ε)", r.kinetic_trace.quadrature],
      ["bound N(∫|∇√ρ|² + ε⁻²∫|∇χ|²)", r.kinetic_bound],
    ]);
    showError(null);
  } catch (e) {
    showError(e);
  }
}

function masses() {
  return new Float64Array($("masses").value.split(/[\s,]+/).filter(Boolean).map(Number));
}

function runTransport() {
  const m = masses();
  const n = Number($("particles").value);
  try {
    const r = JSON.parse(transport(m, n));
    drawPlan($("plan"), m.length, r.atoms);
    table($("lp-table"), [
      ["value", r.value],
      ["duality gap", r.duality_gap],
      ["marginal residual", r.residual],
      ["atoms", r.atoms.length],
    ]);
    showError(null);
    runEntropic();
  } catch (e) {
    showError(e);
  }
}

function runEntropic() {
  const beta = 10 ** Number($("beta").value);
  try {
    const r = JSON.parse(entropic(masses(), Number($("particles").value), beta));
    table($("sk-table"), [
      ["β", beta],
      ["entropic plan cost", r.value],
      ["exact value", r.exact],
      ["difference", r.value - r.exact],
      ["iterations", r.iterations],
    ]);
    showError(null);
  } catch (e) {
    showError(e);
  }
}

function bindOutput(id, onInput) {
  const input = $(id);
  const out = document.querySelector(`output[for="${id}"]`);
  const update = () => {
    out.textContent = input.value;
    onInput();
  };
  input.addEventListener("input", update);
  out.textContent = input.value;
}

await init();
bindOutput("shift", runRegularize);
bindOutput("width", runRegularize);
bindOutput("eps", runRegularize);
bindOutput("beta", runEntropic);
$("solve").addEventListener("click", runTransport);
runRegularize();
runTransport();
