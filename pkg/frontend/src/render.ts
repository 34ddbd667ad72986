/** DOM rendering of a ViewModel. One skeleton, updated in place. */

import { PALETTE, type ViewModel } from "./view.js";

export const SKELETON = `
<div class="station">
  <header>
    <h1>coverage-pilot ground station</h1>
    <span id="conn-badge" class="badge" data-state="idle">idle</span>
  </header>
  <div id="banner" class="banner" hidden></div>
  <main>
    <section class="map-pane">
      <div class="map-wrap">
        <div id="grid" class="grid"></div>
        <svg id="overlay" class="overlay" preserveAspectRatio="none">
          <polyline id="plan-line" fill="none" stroke-width="0.14" stroke-dasharray="0.3 0.18" />
          <circle id="vehicle" r="0.32" visibility="hidden" />
        </svg>
      </div>
      <dl class="readouts">
        <div><dt>CR</dt><dd id="cr-readout">-</dd></div>
        <div><dt>DR</dt><dd id="dr-readout">-</dd></div>
        <div><dt>step</dt><dd id="step-readout">0</dd></div>
        <div><dt>status</dt><dd id="status-readout">-</dd></div>
      </dl>
      <div class="controls">
        <button id="pause-btn" type="button">pause</button>
        <button id="resume-btn" type="button">resume</button>
        <button id="abort-btn" type="button">abort</button>
      </div>
      <p id="debug-line" class="debug"></p>
    </section>
    <section class="side-pane">
      <form id="start-form">
        <h2>new mission</h2>
        <label>id <input name="id" value="default" /></label>
        <label>width <input name="width" type="number" value="10" /></label>
        <label>height <input name="height" type="number" value="10" /></label>
        <label>density <input name="density" type="number" step="0.05" value="0.15" /></label>
        <label>seed <input name="seed" type="number" value="0" /></label>
        <label>planner
          <select name="planner">
            <option value="mcts">mcts</option>
            <option value="single-shot">single-shot</option>
          </select>
        </label>
        <label>pace (s/step) <input name="pace" type="number" step="0.01" value="0.05" /></label>
        <label class="wide">instruction <input name="instruction" value="cover the entire area" /></label>
        <button id="start-btn" type="submit">start mission</button>
        <p id="start-error" class="form-error" hidden></p>
      </form>
      <div class="chat">
        <h2>instructions</h2>
        <ul id="transcript"></ul>
        <form id="chat-form">
          <input id="chat-input" placeholder="e.g. search the top-left quadrant carefully" autocomplete="off" />
          <button id="chat-send" type="submit" disabled>send</button>
        </form>
      </div>
    </section>
  </main>
</div>
`;

export function byId<T extends Element = HTMLElement>(root: ParentNode, id: string): T {
  const el = root.querySelector(`#${id}`);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function renderGrid(root: ParentNode, vm: ViewModel): void {
  const grid = byId<HTMLDivElement>(root, "grid");
  const overlay = byId<SVGSVGElement>(root, "overlay");
  if (!vm.grid) {
    grid.replaceChildren();
    grid.removeAttribute("data-dims");
    return;
  }
  const { width, height, cells } = vm.grid;
  const dims = `${width}x${height}`;
  if (grid.getAttribute("data-dims") !== dims) {
    grid.setAttribute("data-dims", dims);
    grid.style.gridTemplateColumns = `repeat(${width}, var(--cell))`;
    overlay.setAttribute("viewBox", `0 0 ${width} ${height}`);
    grid.replaceChildren(
      ...cells.map((cell) => {
        const div = grid.ownerDocument!.createElement("div");
        div.className = `cell ${cell.kind}`;
        div.dataset.row = String(cell.row);
        div.dataset.col = String(cell.col);
        return div;
      }),
    );
  }
  const divs = grid.children;
  cells.forEach((cell, i) => {
    const div = divs[i] as HTMLElement;
    div.style.backgroundColor = cell.shade;
    div.dataset.count = String(cell.count);
  });
}

function renderOverlay(root: ParentNode, vm: ViewModel): void {
  const line = byId<SVGPolylineElement>(root, "plan-line");
  line.setAttribute("points", vm.planPoints);
  line.setAttribute("stroke", PALETTE.plan);
  const vehicle = byId<SVGCircleElement>(root, "vehicle");
  if (vm.vehicle) {
    const [row, col] = vm.vehicle;
    vehicle.setAttribute("cx", String(col + 0.5));
    vehicle.setAttribute("cy", String(row + 0.5));
    vehicle.setAttribute("fill", PALETTE.vehicle);
    vehicle.setAttribute("visibility", "visible");
  } else {
    vehicle.setAttribute("visibility", "hidden");
  }
}

function renderTranscript(root: ParentNode, vm: ViewModel): void {
  const list = byId<HTMLUListElement>(root, "transcript");
  list.replaceChildren(
    ...vm.transcript.map((entry) => {
      const item = list.ownerDocument!.createElement("li");
      item.className = `entry ${entry.kind}`;
      item.textContent = entry.text;
      return item;
    }),
  );
  list.scrollTop = list.scrollHeight;
}

export function render(root: ParentNode, vm: ViewModel): void {
  renderGrid(root, vm);
  renderOverlay(root, vm);
  byId(root, "cr-readout").textContent = vm.readouts.cr;
  byId(root, "dr-readout").textContent = vm.readouts.dr;
  byId(root, "step-readout").textContent = String(vm.readouts.step);
  byId(root, "status-readout").textContent =
    vm.readouts.status + (vm.paused ? " (paused)" : "");
  const badge = byId(root, "conn-badge");
  badge.textContent = vm.connection;
  badge.setAttribute("data-state", vm.connection);
  const banner = byId<HTMLDivElement>(root, "banner");
  if (vm.banner) {
    banner.hidden = false;
    banner.textContent = vm.banner.text;
    banner.setAttribute("data-kind", vm.banner.kind);
  } else {
    banner.hidden = true;
    banner.textContent = "";
    banner.removeAttribute("data-kind");
  }
  renderTranscript(root, vm);
  byId(root, "debug-line").textContent = vm.debug;
}
