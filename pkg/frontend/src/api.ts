// Thin client for the sciunit API; every graph shown in the UI is one of
// these responses, never a client-side recomputation.

import type {
  ExecutionsPayload,
  PlanPayload,
  RepeatEvent,
  RepletePayload,
  SummaryPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.error === "string") detail = body.error;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return resp;
  }

  private async getJson<T>(path: string): Promise<T> {
    return (await this.request(path)).json() as Promise<T>;
  }

  private async postJson<T>(path: string, payload: unknown): Promise<T> {
    const resp = await this.request(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    return resp.json() as Promise<T>;
  }

  executions(): Promise<ExecutionsPayload> {
    return this.getJson("/api/executions");
  }

  summary(ref: string): Promise<SummaryPayload> {
    return this.getJson(`/api/graph/${encodeURIComponent(ref)}?view=summary`);
  }

  replete(ref: string): Promise<RepletePayload> {
    return this.getJson(`/api/graph/${encodeURIComponent(ref)}?view=replete`);
  }

  expand(ref: string, nodeId: string): Promise<SummaryPayload> {
    return this.postJson("/api/expand", { id: ref, node_id: nodeId });
  }

  plan(ref: string, selected: string[]): Promise<PlanPayload> {
    return this.postJson("/api/plan", { id: ref, selected });
  }

  /** Stream a repeat; events arrive as NDJSON lines ending with a report. */
  async repeat(
    ref: string,
    selected: string[],
    onEvent?: (event: RepeatEvent) => void,
  ): Promise<RepeatEvent[]> {
    const resp = await this.request("/api/repeat", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(selected.length ? { id: ref, selected } : { id: ref }),
    });
    const events: RepeatEvent[] = [];
    const push = (line: string) => {
      if (!line.trim()) return;
      const event = JSON.parse(line) as RepeatEvent;
      events.push(event);
      onEvent?.(event);
    };
    if (resp.body && typeof resp.body.getReader === "function") {
      const reader = resp.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        for (let nl = buffer.indexOf("\n"); nl >= 0; nl = buffer.indexOf("\n")) {
          push(buffer.slice(0, nl));
          buffer = buffer.slice(nl + 1);
        }
      }
      push(buffer);
    } else {
      for (const line of (await resp.text()).split("\n")) push(line);
    }
    return events;
  }
}
