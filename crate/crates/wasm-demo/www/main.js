import init, { simulateField, variogramMap, fitMl } from "./pkg/anisofield_wasm_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
let field = null;

function heatmap(canvas, values, side) {
  canvas.width = side;
  canvas.height = side;
  const finite = values.filter(Number.isFinite);
  const lo = Math.min(...finite);
  const hi = Math.max(...finite);
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(side, side);
  values.forEach((v, i) => {
    const t = Number.isFinite(v) && hi > lo ? (v - lo) / (hi - lo) : 0.5;
    img.data[4 * i] = Math.round(255 * t);
    img.data[4 * i + 1] = Math.round(255 * (1 - Math.abs(2 * t - 1)));
    img.data[4 * i + 2] = Math.round(255 * (1 - t));
    img.data[4 * i + 3] = Number.isFinite(v) ? 255 : 0;
  });
  ctx.putImageData(img, 0, 0);
}

function report(text) {
  $("fit").textContent = text;
}

function run(action) {
  try {
    action();
  } catch (e) {
    report(`error: ${e.message ?? e}`);
  }
}

await init();

$("simulate").onclick = () => run(() => {
  const size = num("size");
  const values = simulateField(num("alpha"), num("lambda"), num("theta"), num("nu"), size, num("seed"));
  field = { values, size };
  heatmap($("field-canvas"), values, size);
  report("");
});

$("varmap").onclick = () => run(() => {
  if (!field) throw new Error("simulate a field first");
  const lag = num("maxlag");
  heatmap($("varmap-canvas"), variogramMap(field.values, field.size, field.size, lag), 2 * lag + 1);
});

$("ml").onclick = () => run(() => {
  if (!field) throw new Error("simulate a field first");
  report("fitting...");
  setTimeout(() => run(() => {
    const t0 = performance.now();
    const [alpha, lambda, theta, sigma2, loglik] = fitMl(field.values, field.size, field.size, num("nu"));
    const ms = (performance.now() - t0).toFixed(0);
    report(
      `alpha  ${alpha.toFixed(4)}\nlambda ${lambda.toFixed(4)}\ntheta  ${theta.toFixed(4)}\n` +
      `sigma2 ${sigma2.toFixed(4)}\nloglik ${loglik.toFixed(3)}\n(${ms} ms)`
    );
  }), 0);
});

$("simulate").click();
