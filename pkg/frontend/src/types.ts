// Wire shapes of the hub HTTP API. Field names mirror the JSON exactly.

export type SlotStatus = "Empty" | "Fill" | "Serv";

export interface BarrierInfo {
  state: "closed" | "opening" | "open" | "closing";
  override: "auto" | "forced_open" | "forced_closed";
}

export interface LotDetail {
  lot_id: number;
  seq: number;
  tick_ms: number;
  slots: { index: number; status: SlotStatus }[];
  available: number;
  barrier: BarrierInfo;
  online: boolean;
  updated_at_ms: number;
}

export interface LotSummary {
  lot_id: number;
  available: number;
  slot_count: number;
  online: boolean;
  updated_at_ms: number;
}

export interface EventRecord {
  record_seq: number;
  received_at_ms: number;
  lot_id: number;
  kind: string;
  slot?: number;
  from?: unknown;
  to?: unknown;
  source_frame_seq?: number;
  payload?: Record<string, unknown>;
}

export type Command =
  | { type: "barrier_override"; mode: BarrierInfo["override"] }
  | { type: "slot_service"; slot: number; out_of_service: boolean };

export type ConnectionState = "live" | "reconnecting" | "stale";
