// Browser entry point: bind one Dashboard to the DOM. Served as a static
// page next to the hub (same origin), so baseUrl is empty.

import { Dashboard } from "./dashboard.js";
import { renderLot } from "./render.js";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

export function mount(lotId = 1, baseUrl = ""): Dashboard {
  const dash = new Dashboard(baseUrl, lotId);
  const grid = el("grid");
  const counter = el("counter");
  const barrier = el("barrier");
  const banner = el("banner");
  const denied = el("denied");

  dash.store.onChange((model) => {
    const view = renderLot(model);
    grid.replaceChildren(
      ...view.cells.map((cell) => {
        const div = document.createElement("div");
        div.className = `cell ${cell.cssClass}`;
        div.textContent = cell.label;
        return div;
      }),
    );
    counter.textContent = view.counter;
    barrier.textContent = view.barrier;
    banner.textContent = view.banner ?? "";
    banner.hidden = view.banner === null;
    denied.hidden = !model.deniedFlash;
  });

  el("force-open").onclick = () => void dash.setBarrierOverride("forced_open");
  el("force-closed").onclick = () =>
    void dash.setBarrierOverride("forced_closed");
  el("auto").onclick = () => void dash.setBarrierOverride("auto");
  el("arrive").onclick = () => void dash.client.injectArrival(120_000);

  void dash.start();
  return dash;
}
