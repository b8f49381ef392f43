// Thin typed wrapper over the hub HTTP API.

import type { Command, EventRecord, LotDetail, LotSummary } from "./types.js";

export class HubClient {
  constructor(private baseUrl: string) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      throw new Error(`${init?.method ?? "GET"} ${path}: HTTP ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  listLots(): Promise<LotSummary[]> {
    return this.json("/api/lots");
  }

  getLot(lotId: number): Promise<LotDetail> {
    return this.json(`/api/lots/${lotId}`);
  }

  getEvents(lotId: number, fromSeq = 0, limit = 1000): Promise<EventRecord[]> {
    return this.json(`/api/lots/${lotId}/events?from_seq=${fromSeq}&limit=${limit}`);
  }

  async sendCommand(lotId: number, command: Command): Promise<number> {
    const body = await this.json<{ command_id: number }>(
      `/api/lots/${lotId}/commands`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(command),
      },
    );
    return body.command_id;
  }

  injectArrival(stayMs: number): Promise<unknown> {
    return this.json("/api/sim/vehicles", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ action: "arrive", stay_ms: stayMs }),
    });
  }

  injectDeparture(slot: number): Promise<unknown> {
    return this.json("/api/sim/vehicles", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ action: "depart", slot }),
    });
  }
}
