/** HTTP and SSE client for the ground-station service.
 *
 * Uses fetch plus hand parsing of the event stream rather than
 * EventSource so the same code runs in the browser and under node,
 * and so reconnects can pass from_seq explicitly.
 */

import type {
  ControlCommand,
  InstructionAck,
  MissionMap,
  ServiceMeta,
  Snapshot,
  StartMissionRequest,
  StreamEvent,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let detail = `${resp.status} ${resp.statusText}`;
  try {
    const body = await resp.json();
    if (typeof body.detail === "string") detail = body.detail;
    else if (body.detail) detail = JSON.stringify(body.detail);
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(resp.status, detail);
}

/** Incremental parser for `data: {json}` server-sent event frames. */
export class SseParser {
  private buffer = "";

  /** Feed a chunk; returns the events completed by it. */
  push(chunk: string): StreamEvent[] {
    this.buffer += chunk;
    const events: StreamEvent[] = [];
    for (;;) {
      const lf = this.buffer.indexOf("\n\n");
      const crlf = this.buffer.indexOf("\r\n\r\n");
      let end: number;
      let skip: number;
      if (lf === -1 && crlf === -1) break;
      if (crlf !== -1 && (lf === -1 || crlf < lf)) {
        end = crlf;
        skip = 4;
      } else {
        end = lf;
        skip = 2;
      }
      const frame = this.buffer.slice(0, end);
      this.buffer = this.buffer.slice(end + skip);
      const data = frame
        .split(/\r?\n/)
        .filter((line) => line.startsWith("data:"))
        .map((line) => line.slice(5).trimStart())
        .join("\n");
      if (data) events.push(JSON.parse(data) as StreamEvent);
    }
    return events;
  }
}

export interface StreamHandlers {
  onEvent: (ev: StreamEvent) => void;
}

export class GroundStationClient {
  /** base is "" when the page is served by the service itself. */
  constructor(private readonly base: string = "") {}

  private url(path: string): string {
    return this.base + path;
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.url(path));
    await raiseForStatus(resp);
    return (await resp.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(this.url(path), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    await raiseForStatus(resp);
    return (await resp.json()) as T;
  }

  meta(): Promise<ServiceMeta> {
    return this.getJson("/");
  }

  startMission(req: StartMissionRequest): Promise<{ id: string; status: string }> {
    return this.postJson("/missions", req);
  }

  missionMap(id: string): Promise<MissionMap> {
    return this.getJson(`/missions/${encodeURIComponent(id)}/map`);
  }

  state(id: string): Promise<Snapshot> {
    return this.getJson(`/missions/${encodeURIComponent(id)}/state`);
  }

  sendInstruction(id: string, text: string): Promise<InstructionAck> {
    return this.postJson(`/missions/${encodeURIComponent(id)}/instruction`, { text });
  }

  control(id: string, command: ControlCommand): Promise<{ ok: boolean }> {
    return this.postJson(`/missions/${encodeURIComponent(id)}/control`, { command });
  }

  /**
   * Consume a snapshot stream until the server closes it or the signal
   * aborts. from_seq omitted: current snapshot then live; 0: full
   * history replay; N: history from N. Resolves when the stream ends.
   */
  async stream(
    id: string,
    fromSeq: number | undefined,
    handlers: StreamHandlers,
    signal?: AbortSignal,
  ): Promise<void> {
    const query = fromSeq === undefined ? "" : `?from_seq=${fromSeq}`;
    const resp = await fetch(this.url(`/missions/${encodeURIComponent(id)}/stream${query}`), {
      signal,
    });
    await raiseForStatus(resp);
    if (!resp.body) throw new ApiError(0, "stream response has no body");
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) return;
        for (const ev of parser.push(decoder.decode(value, { stream: true }))) {
          handlers.onEvent(ev);
        }
      }
    } finally {
      reader.releaseLock();
    }
  }

  /** Record a finished mission's full history in one pass. */
  async recordStream(id: string, signal?: AbortSignal): Promise<StreamEvent[]> {
    const events: StreamEvent[] = [];
    await this.stream(id, 0, { onEvent: (ev) => events.push(ev) }, signal);
    return events;
  }
}
