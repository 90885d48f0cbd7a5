import init, { previewTrace, simulateScheme, energyCalculator, schemeNames } from "./pkg/cotrack_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function show(el, f) {
  try {
    el.classList.remove("err");
    f();
  } catch (e) {
    el.classList.add("err");
    el.textContent = String(e.message ?? e);
  }
}

function drawPreview(p) {
  const c = $("pv-canvas");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  let [x0, x1, y0, y1] = [Infinity, -Infinity, Infinity, -Infinity];
  for (const frame of p.frames) {
    for (const [x, y] of frame) {
      x0 = Math.min(x0, x); x1 = Math.max(x1, x);
      y0 = Math.min(y0, y); y1 = Math.max(y1, y);
    }
  }
  const pad = 12;
  const s = Math.min((c.width - 2 * pad) / Math.max(x1 - x0, 1), (c.height - 2 * pad) / Math.max(y1 - y0, 1));
  const px = (x) => pad + (x - x0) * s;
  const py = (y) => c.height - pad - (y - y0) * s;
  for (let i = 0; i < p.nodes; i++) {
    g.strokeStyle = `hsl(${(360 * i) / p.nodes} 60% 45% / 0.6)`;
    g.beginPath();
    p.frames.forEach((f, k) => (k ? g.lineTo(px(f[i][0]), py(f[i][1])) : g.moveTo(px(f[i][0]), py(f[i][1]))));
    g.stroke();
  }
  g.fillStyle = "#222";
  g.fillText(`${((x1 - x0) / 1000).toFixed(1)} km across`, pad, 12);
  $("pv-stats").textContent =
    `mean speed ${p.mean_speed.toFixed(2)} m/s, foraging ${p.forage_speed.toFixed(2)} m/s, ` +
    `nearest neighbour median ${p.nn_median_m.toFixed(1)} m`;
}

function runScheme() {
  const out = $("sim-out");
  out.textContent = "running...";
  setTimeout(() =>
    show(out, () => {
      const r = JSON.parse(
        simulateScheme($("sim-scheme").value, num("sim-value"), num("sim-nodes"), num("sim-dur"), num("sim-seed")),
      );
      const cats = r.energy_by_category.map(([k, v]) => `  ${k.padEnd(7)} ${v.toFixed(3)} J`).join("\n");
      out.textContent =
        `${r.scheme} at ${r.sweep_value}\n` +
        `mean error      ${r.mean_error_m.toFixed(2)} m (std ${r.std_error_m.toFixed(2)})\n` +
        `energy per node ${r.mean_energy_j.toFixed(2)} J\n` +
        `fixes per node  ${r.mean_fixes.toFixed(1)}\n` +
        `clusters        ${r.mean_clusters.toFixed(2)}\n` +
        `messages sent   ${r.messages_sent}\n` +
        `dead nodes      ${r.dead_nodes}\n` +
        `fleet energy by category:\n${cats}`;
    }),
  );
}

function computeEnergy() {
  const out = $("en-out");
  show(out, () => {
    const e = JSON.parse(energyCalculator(num("en-pgps"), num("en-lock"), num("en-iv"), num("en-dur"), num("en-k")));
    out.textContent =
      `GPS fix          ${e.gps_fix_j.toFixed(4)} J\n` +
      `radio message    ${(e.radio_msg_j * 1e6).toFixed(2)} uJ\n` +
      `accel+mag        ${(e.accmag_per_s_j * 1e6).toFixed(3)} uJ/s\n` +
      `individual node  ${e.individual_j.toFixed(1)} J (battery ${e.battery_j} J, lasts ${e.individual_lifetime_h.toFixed(1)} h)\n` +
      `clustered node   ${e.clustered_j.toFixed(1)} J`;
  });
}

await init();
const schemes = JSON.parse(schemeNames());
for (const [name, dynamic] of schemes) {
  const o = document.createElement("option");
  o.value = name;
  o.textContent = name;
  o.dataset.dynamic = dynamic;
  $("sim-scheme").append(o);
}
$("sim-scheme").addEventListener("change", (ev) => {
  const dynamic = ev.target.selectedOptions[0].dataset.dynamic === "true";
  $("sim-unit").textContent = dynamic ? "limit (m)" : "interval (s)";
  $("sim-value").value = dynamic ? 100 : 30;
});
$("pv-go").addEventListener("click", () =>
  show($("pv-stats"), () => drawPreview(JSON.parse(previewTrace(num("pv-nodes"), num("pv-dur"), num("pv-seed"))))),
);
$("sim-go").addEventListener("click", runScheme);
$("en-go").addEventListener("click", computeEnergy);
$("pv-go").click();
computeEnergy();
