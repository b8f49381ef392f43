// Single-lot UI state store. Applies stream records incrementally and
// derives the availability counter from the grid itself, so the rendered
// counter can never disagree with the rendered cells.

import type {
  BarrierInfo,
  ConnectionState,
  EventRecord,
  LotDetail,
  SlotStatus,
} from "./types.js";

export type ApplyResult = "applied" | "ignored" | "gap";

export interface UiLotModel {
  lotId: number;
  statuses: SlotStatus[];
  available: number;
  barrier: BarrierInfo;
  connection: ConnectionState;
  lastRecordSeq: number;
  deniedFlash: boolean;
  pending: Set<string>;
}

function availableOf(statuses: SlotStatus[]): number {
  return statuses.filter((s) => s === "Empty").length;
}

export class LotStore {
  model: UiLotModel;
  private listeners: Array<(m: UiLotModel) => void> = [];

  constructor(lotId: number) {
    this.model = {
      lotId,
      statuses: [],
      available: 0,
      barrier: { state: "closed", override: "auto" },
      connection: "reconnecting",
      lastRecordSeq: 0,
      deniedFlash: false,
      pending: new Set(),
    };
  }

  onChange(fn: (m: UiLotModel) => void): void {
    this.listeners.push(fn);
  }

  /** Replace the whole grid from a GET /api/lots/{id} response. */
  loadSnapshot(lot: LotDetail, lastRecordSeq?: number): void {
    this.model.statuses = lot.slots.map((s) => s.status);
    this.model.available = availableOf(this.model.statuses);
    this.model.barrier = { ...lot.barrier };
    if (lastRecordSeq !== undefined) {
      this.model.lastRecordSeq = lastRecordSeq;
    }
    this.notify();
  }

  setConnection(state: ConnectionState): void {
    this.model.connection = state;
    this.notify();
  }

  markPending(key: string): void {
    this.model.pending.add(key);
    this.notify();
  }

  revertPending(key: string): void {
    this.model.pending.delete(key);
    this.notify();
  }

  /**
   * Apply one stream record. Returns "gap" when record_seq is not the
   * direct successor of the last applied one; the caller must refetch.
   */
  apply(rec: EventRecord): ApplyResult {
    const m = this.model;
    if (rec.lot_id !== m.lotId) return "ignored";
    if (m.lastRecordSeq > 0 && rec.record_seq <= m.lastRecordSeq) {
      return "ignored"; // duplicate delivery
    }
    if (m.lastRecordSeq > 0 && rec.record_seq !== m.lastRecordSeq + 1) {
      return "gap";
    }
    m.lastRecordSeq = rec.record_seq;
    m.deniedFlash = false;

    switch (rec.kind) {
      case "SlotChanged": {
        const i = (rec.slot ?? 0) - 1;
        if (i >= 0 && i < m.statuses.length) {
          m.statuses[i] = rec.to as SlotStatus;
          m.available = availableOf(m.statuses);
        }
        break;
      }
      case "BarrierChanged": {
        m.barrier = { ...(rec.to as BarrierInfo) };
        m.pending.delete("barrier");
        break;
      }
      case "AvailabilityChanged": {
        // derived locally; a disagreement means we missed something
        if ((rec.to as number) !== m.available) return "gap";
        break;
      }
      case "EntryDenied": {
        m.deniedFlash = true;
        break;
      }
      case "CommandAcked": {
        m.pending.delete("barrier");
        m.pending.delete("slot_service");
        break;
      }
      default:
        break; // SimRunInfo, VehicleParked, ... are informational
    }
    this.notify();
    return "applied";
  }

  private notify(): void {
    for (const fn of this.listeners) fn(this.model);
  }
}
