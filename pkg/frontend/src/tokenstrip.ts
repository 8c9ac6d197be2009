/** Colored strip of motion tokens, hue keyed by codebook index. */

export function renderTokenStrip(tokens: number[], codebookSize = 512): HTMLElement {
  const strip = document.createElement("div");
  strip.className = "token-strip";
  strip.title = `${tokens.length} tokens`;
  for (const token of tokens) {
    const cell = document.createElement("span");
    cell.className = "token-cell";
    const hue = Math.round((360 * token) / Math.max(1, codebookSize));
    cell.style.backgroundColor = `hsl(${hue}, 70%, 55%)`;
    cell.title = `token ${token}`;
    strip.appendChild(cell);
  }
  return strip;
}
