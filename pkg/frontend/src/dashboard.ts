// Wires store + stream + client into the single-lot operator view.
// All stream records and user actions funnel through one LotStore.

import { HubClient } from "./client.js";
import { SseStream } from "./sse.js";
import { LotStore } from "./store.js";
import type { BarrierInfo, EventRecord } from "./types.js";

export class Dashboard {
  readonly store: LotStore;
  readonly client: HubClient;
  private stream: SseStream | null = null;
  private refetching = false;
  private recordListeners: Array<(rec: EventRecord) => void> = [];

  constructor(
    baseUrl: string,
    readonly lotId: number,
  ) {
    this.client = new HubClient(baseUrl);
    this.store = new LotStore(lotId);
    this.stream = new SseStream(`${baseUrl}/api/lots/${lotId}/stream`, {
      onEvent: (data) => this.handleRecord(JSON.parse(data) as EventRecord),
      resumeFrom: () => this.store.model.lastRecordSeq,
      onStateChange: (s) =>
        this.store.setConnection(s === "live" ? "live" : "reconnecting"),
    });
  }

  async start(): Promise<void> {
    const lot = await this.client.getLot(this.lotId);
    this.store.loadSnapshot(lot);
    this.stream!.start();
  }

  stop(): void {
    this.stream?.stop();
  }

  /** Drop the connection; the stream resumes itself from lastRecordSeq. */
  forceDisconnect(): void {
    this.stream?.forceDisconnect();
  }

  /** Observe every stream record after the store has seen it. */
  onRecord(fn: (rec: EventRecord) => void): void {
    this.recordListeners.push(fn);
  }

  private handleRecord(rec: EventRecord): void {
    if (this.store.apply(rec) === "gap") {
      void this.refetch(rec.record_seq);
    }
    for (const fn of this.recordListeners) fn(rec);
  }

  /** Gap recovery: the snapshot is at least as new as the gap record. */
  private async refetch(lastSeq: number): Promise<void> {
    if (this.refetching) return;
    this.refetching = true;
    try {
      const lot = await this.client.getLot(this.lotId);
      this.store.loadSnapshot(lot, lastSeq);
    } finally {
      this.refetching = false;
    }
  }

  async setBarrierOverride(mode: BarrierInfo["override"]): Promise<void> {
    this.store.markPending("barrier");
    try {
      await this.client.sendCommand(this.lotId, {
        type: "barrier_override",
        mode,
      });
    } catch (err) {
      this.store.revertPending("barrier");
      throw err;
    }
  }

  async setSlotService(slot: number, outOfService: boolean): Promise<void> {
    this.store.markPending("slot_service");
    try {
      await this.client.sendCommand(this.lotId, {
        type: "slot_service",
        slot,
        out_of_service: outOfService,
      });
    } catch (err) {
      this.store.revertPending("slot_service");
      throw err;
    }
  }
}
