import init, { HeatDemo, TrailDemo, smooth_series } from "./pkg/calmrelay_demo_wasm.js";

await init();

const $ = (id) => document.getElementById(id);

function bindRange(id, format, onChange) {
  const input = $(id);
  const show = () => {
    $(id + "-out").textContent = format(Number(input.value));
    onChange(Number(input.value));
  };
  input.addEventListener("input", show);
  show();
}

// heat map
const heat = new HeatDemo();
const heatCanvas = $("heat");
const heatCtx = heatCanvas.getContext("2d");
let threshold = 0;
let pointer = null;

heatCanvas.addEventListener("pointermove", (e) => {
  const r = heatCanvas.getBoundingClientRect();
  pointer = [(e.clientX - r.left) / r.width, (e.clientY - r.top) / r.height];
});
heatCanvas.addEventListener("pointerleave", () => (pointer = null));
$("clear").addEventListener("click", () => heat.clear());
bindRange("bandwidth", (v) => v.toFixed(3), (v) => heat.set_bandwidth(v));
bindRange("threshold", (v) => (v === 0 ? "off" : v.toFixed(2)), (v) => (threshold = v));

function drawHeat() {
  const w = heat.width(), h = heat.height();
  const cells = heat.render(threshold);
  const cw = heatCanvas.width / w, ch = heatCanvas.height / h;
  heatCtx.fillStyle = "#fff";
  heatCtx.fillRect(0, 0, heatCanvas.width, heatCanvas.height);
  for (let j = 0; j < h; j++) {
    for (let i = 0; i < w; i++) {
      const v = cells[j * w + i];
      if (v > 0) {
        heatCtx.fillStyle = `rgba(220, 40, 20, ${v})`;
        heatCtx.fillRect(i * cw, j * ch, cw + 0.5, ch + 0.5);
      }
    }
  }
}

// trails
let trails;
let nodders = 7;
let gain = 2.5;
const trailCanvas = $("trails");
const trailCtx = trailCanvas.getContext("2d");
const resetTrails = () => {
  trails = new TrailDemo(10, nodders, 2.0);
  trails.set_gains(1.0, gain);
};
bindRange("nodders", String, (v) => { nodders = v; resetTrails(); });
bindRange("gain", (v) => v.toFixed(1), (v) => { gain = v; trails.set_gains(1.0, v); });

function drawTrails(frame) {
  const W = trailCanvas.width, H = trailCanvas.height;
  // the display box is a little wider than the clamp plus the slot offsets
  const scale = Math.min(W, H) / 1.4;
  trailCtx.clearRect(0, 0, W, H);
  trailCtx.strokeStyle = "#1a5fb4";
  trailCtx.lineWidth = 2;
  let k = 0;
  while (k < frame.length) {
    const len = frame[k++];
    trailCtx.beginPath();
    for (let p = 0; p < len; p++) {
      const x = W / 2 + frame[k++] * scale, y = H / 2 + frame[k++] * scale;
      p === 0 ? trailCtx.moveTo(x, y) : trailCtx.lineTo(x, y);
    }
    trailCtx.stroke();
  }
  const d = trails.dominance();
  $("dominance").textContent = Number.isFinite(d) ? d.toFixed(2) : "∞";
}

// smoothing
const noisy = Array.from({ length: 200 }, (_, k) => 0.5 + 0.25 * Math.sin(k / 15) + (Math.random() - 0.5) * 0.2);
const smoothCanvas = $("smooth");
const smoothCtx = smoothCanvas.getContext("2d");

function plot(values, color) {
  const W = smoothCanvas.width, H = smoothCanvas.height;
  smoothCtx.strokeStyle = color;
  smoothCtx.beginPath();
  values.forEach((v, k) => {
    const x = (k / (values.length - 1)) * W, y = H - v * H;
    k === 0 ? smoothCtx.moveTo(x, y) : smoothCtx.lineTo(x, y);
  });
  smoothCtx.stroke();
}

bindRange("window", String, (v) => {
  smoothCtx.clearRect(0, 0, smoothCanvas.width, smoothCanvas.height);
  plot(noisy, "#aaa");
  plot(Array.from(smooth_series(new Float64Array(noisy), v)), "#1a5fb4");
});

// one server tick every 1/15 s
setInterval(() => {
  heat.advance(67);
  if (pointer) heat.gaze(pointer[0], pointer[1]);
  drawHeat();
  drawTrails(trails.step());
}, 1000 / 15);
