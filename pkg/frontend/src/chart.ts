/**
 * Multi-line SVG chart of downsampled joint-angle traces with a scrubber.
 *
 * No rendering library: the trace count is small and a hand-rolled SVG keeps
 * the client dependency-free. A range input scrubs a cursor line across time
 * and updates a readout of the channel values under it.
 */

import { JointTraces } from "./api.js";

const WIDTH = 640;
const HEIGHT = 220;
const PAD = 28;

// A stable qualitative palette; channels cycle through it.
const PALETTE = [
  "#4269d0", "#efb118", "#ff725c", "#6cc5b0", "#3ca951",
  "#ff8ab7", "#a463f2", "#97bbf5", "#9c6b4e", "#9498a0",
];

export interface ChartHandle {
  root: HTMLElement;
  setScrub(frameIndex: number): void;
}

function channelColor(index: number): string {
  return PALETTE[index % PALETTE.length];
}

export function renderTraceChart(
  traces: JointTraces,
  channels: number[] = defaultChannels(traces),
): ChartHandle {
  const root = document.createElement("div");
  root.className = "trace-chart";
  const n = traces.data.length;
  if (n === 0) {
    root.textContent = "no trace data";
    return { root, setScrub: () => undefined };
  }

  const values = channels.map((c) => traces.data.map((row) => row[c]));
  const flat = values.flat();
  const lo = Math.min(...flat);
  const hi = Math.max(...flat);
  const span = hi - lo || 1;
  const x = (i: number) => PAD + ((WIDTH - 2 * PAD) * i) / Math.max(1, n - 1);
  const y = (v: number) => HEIGHT - PAD - ((HEIGHT - 2 * PAD) * (v - lo)) / span;

  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  svg.setAttribute("class", "trace-svg");

  for (const [idx, series] of values.entries()) {
    const path = document.createElementNS("http://www.w3.org/2000/svg", "path");
    const d = series.map((v, i) => `${i === 0 ? "M" : "L"}${x(i).toFixed(1)},${y(v).toFixed(1)}`).join("");
    path.setAttribute("d", d);
    path.setAttribute("fill", "none");
    path.setAttribute("stroke", channelColor(channels[idx]));
    path.setAttribute("stroke-width", "1.4");
    svg.appendChild(path);
  }

  const cursor = document.createElementNS("http://www.w3.org/2000/svg", "line");
  cursor.setAttribute("y1", String(PAD));
  cursor.setAttribute("y2", String(HEIGHT - PAD));
  cursor.setAttribute("stroke", "#556");
  cursor.setAttribute("stroke-dasharray", "3,3");
  svg.appendChild(cursor);

  const legend = document.createElement("div");
  legend.className = "trace-legend";
  for (const c of channels) {
    const item = document.createElement("span");
    item.className = "legend-item";
    item.style.color = channelColor(c);
    item.textContent = traces.channels[c];
    legend.appendChild(item);
  }

  const readout = document.createElement("div");
  readout.className = "trace-readout";

  const scrub = document.createElement("input");
  scrub.type = "range";
  scrub.min = "0";
  scrub.max = String(n - 1);
  scrub.value = "0";
  scrub.className = "trace-scrub";

  const setScrub = (frameIndex: number) => {
    const i = Math.max(0, Math.min(n - 1, Math.round(frameIndex)));
    cursor.setAttribute("x1", String(x(i)));
    cursor.setAttribute("x2", String(x(i)));
    const t = (i * traces.stride) / traces.frame_rate_hz;
    const parts = channels.map(
      (c, k) => `${traces.channels[c]}: ${values[k][i].toFixed(3)} rad`,
    );
    readout.textContent = `t = ${t.toFixed(2)} s   ${parts.join("   ")}`;
    scrub.value = String(i);
  };
  scrub.addEventListener("input", () => setScrub(Number(scrub.value)));
  setScrub(0);

  root.append(svg, scrub, readout, legend);
  return { root, setScrub };
}

function defaultChannels(traces: JointTraces): number[] {
  const wanted = ["hip_flexion_l", "hip_flexion_r", "knee_flexion_l", "knee_flexion_r"];
  const picked = wanted.map((name) => traces.channels.indexOf(name)).filter((i) => i >= 0);
  return picked.length > 0 ? picked : [0, 1, 2, 3].filter((i) => i < traces.channels.length);
}
