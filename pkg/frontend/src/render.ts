// Text rendering of the lot view (the DOM layer binds these strings to
// colored cells: Fill=red, Empty=green, Serv=grey).

import type { UiLotModel } from "./store.js";

const CELL_CLASS: Record<string, string> = {
  Fill: "red",
  Empty: "green",
  Serv: "grey",
};

export interface RenderedView {
  cells: { label: string; cssClass: string }[];
  counter: string;
  barrier: string;
  banner: string | null;
}

export function renderLot(model: UiLotModel): RenderedView {
  const cells = model.statuses.map((s, i) => ({
    label: `${i + 1}:${s}`,
    cssClass: CELL_CLASS[s] ?? "grey",
  }));
  const lock = model.barrier.override === "forced_closed" ? " 🔒" : "";
  return {
    cells,
    counter: `Available: ${model.available}`,
    barrier: `${model.barrier.state}${lock}`,
    banner:
      model.connection === "live"
        ? null
        : model.connection === "reconnecting"
          ? "reconnecting…"
          : "showing stale data",
  };
}
