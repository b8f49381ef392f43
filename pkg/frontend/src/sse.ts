// Minimal SSE client over fetch + ReadableStream. Reconnects with
// exponential backoff, resuming from the caller-supplied sequence so a
// dropped connection misses nothing and repeats nothing.

export interface SseOptions {
  /** Called with each parsed `data:` payload. */
  onEvent: (data: string) => void;
  /** Asked before every (re)connect; becomes the from_seq query param. */
  resumeFrom: () => number;
  onStateChange?: (state: "live" | "reconnecting") => void;
  /** Backoff start, doubled per failure up to maxBackoffMs. */
  backoffMs?: number;
  maxBackoffMs?: number;
}

export function parseSseChunks(): {
  push: (chunk: string) => string[];
} {
  // SSE framing: events separated by blank lines; `:` lines are comments.
  let buffer = "";
  return {
    push(chunk: string): string[] {
      buffer += chunk;
      const out: string[] = [];
      let idx: number;
      while ((idx = buffer.indexOf("\n\n")) >= 0) {
        const block = buffer.slice(0, idx);
        buffer = buffer.slice(idx + 2);
        for (const line of block.split("\n")) {
          if (line.startsWith("data: ")) out.push(line.slice(6));
          else if (line.startsWith("data:")) out.push(line.slice(5));
        }
      }
      return out;
    },
  };
}

export class SseStream {
  private stopped = false;
  private controller: AbortController | null = null;
  private backoff: number;

  constructor(
    private url: string,
    private opts: SseOptions,
  ) {
    this.backoff = opts.backoffMs ?? 200;
  }

  start(): void {
    void this.loop();
  }

  /** Tear down the current connection; the loop reconnects and resumes. */
  forceDisconnect(): void {
    this.controller?.abort();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  private async loop(): Promise<void> {
    while (!this.stopped) {
      this.controller = new AbortController();
      const from = this.opts.resumeFrom();
      const sep = this.url.includes("?") ? "&" : "?";
      try {
        const resp = await fetch(`${this.url}${sep}from_seq=${from}`, {
          signal: this.controller.signal,
          headers: { accept: "text/event-stream" },
        });
        if (!resp.ok || !resp.body) throw new Error(`stream HTTP ${resp.status}`);
        this.opts.onStateChange?.("live");
        this.backoff = this.opts.backoffMs ?? 200;

        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        const parser = parseSseChunks();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const data of parser.push(decoder.decode(value, { stream: true }))) {
            this.opts.onEvent(data);
          }
        }
      } catch {
        // fall through to reconnect
      }
      if (this.stopped) return;
      this.opts.onStateChange?.("reconnecting");
      await new Promise((r) => setTimeout(r, this.backoff));
      this.backoff = Math.min(this.backoff * 2, this.opts.maxBackoffMs ?? 5000);
    }
  }
}
