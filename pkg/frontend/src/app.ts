/** Controller: one mission on screen, steered through the service API.
 *
 * All state changes flow through applySnapshot or the transcript, and
 * every user action is a plain service call; rendering is a pure
 * function of (map, latest snapshot, transcript, connection).
 */

import { ApiError, GroundStationClient } from "./api.js";
import { byId, render, SKELETON } from "./render.js";
import { buildViewModel, type ConnectionState, type TranscriptEntry } from "./view.js";
import {
  isGapMarker,
  type ControlCommand,
  type MissionMap,
  type Snapshot,
  type StartMissionRequest,
  type StreamEvent,
} from "./types.js";

/** The slice of the client the controller needs; fakes implement this. */
export interface StationApi {
  startMission(req: StartMissionRequest): Promise<{ id: string; status: string }>;
  missionMap(id: string): Promise<MissionMap>;
  state(id: string): Promise<Snapshot>;
  sendInstruction(id: string, text: string): Promise<{ ok: boolean; scheduled_step: number }>;
  control(id: string, command: ControlCommand): Promise<{ ok: boolean }>;
  stream(
    id: string,
    fromSeq: number | undefined,
    handlers: { onEvent: (ev: StreamEvent) => void },
    signal?: AbortSignal,
  ): Promise<void>;
}

export interface AppOptions {
  base?: string;
  reconnectDelayMs?: number;
  client?: StationApi;
}

function delay(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

const TERMINAL: ReadonlySet<string> = new Set(["Complete", "Failed"]);

export class GroundStationApp {
  map: MissionMap | null = null;
  latest: Snapshot | null = null;
  transcript: TranscriptEntry[] = [];
  connection: ConnectionState = "idle";
  missionId: string | null = null;
  lastSeq = 0;

  private closed = false;
  private aborter = new AbortController();
  private streamDone: Promise<void> = Promise.resolve();
  private readonly reconnectDelayMs: number;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: StationApi,
    opts: AppOptions = {},
  ) {
    this.reconnectDelayMs = opts.reconnectDelayMs ?? 500;
  }

  refresh(): void {
    render(this.root, buildViewModel(this.map, this.latest, this.transcript, this.connection));
  }

  /** Snapshot-driven rendering entry; streaming and replay both land here. */
  applySnapshot(snap: Snapshot): void {
    this.latest = snap;
    this.lastSeq = Math.max(this.lastSeq, snap.seq);
    this.refresh();
  }

  /** Feed a recorded event sequence, e.g. a saved stream. */
  replay(events: StreamEvent[]): void {
    for (const ev of events) {
      if (!isGapMarker(ev)) this.applySnapshot(ev);
    }
  }

  async startMission(req: StartMissionRequest): Promise<void> {
    await this.client.startMission(req);
    this.pushEntry({ kind: "info", text: `mission ${req.id} started` });
    await this.connect(req.id);
  }

  async connect(id: string): Promise<void> {
    this.missionId = id;
    this.lastSeq = 0;
    this.map = await this.client.missionMap(id);
    this.applySnapshot(await this.client.state(id));
    this.streamDone = this.streamLoop(id);
  }

  /** Resolves when the current stream loop exits; replay-only use needs none. */
  settled(): Promise<void> {
    return this.streamDone;
  }

  async sendInstruction(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed || !this.missionId) return;
    this.pushEntry({ kind: "user", text: trimmed });
    try {
      const ack = await this.client.sendInstruction(this.missionId, trimmed);
      this.pushEntry({ kind: "ack", text: `replanning at step ${ack.scheduled_step}` });
      if (this.connection === "closed") {
        // a terminal mission can pick work back up after a new instruction
        this.streamDone = this.streamLoop(this.missionId);
      }
    } catch (err) {
      const reason = err instanceof ApiError ? err.message : String(err);
      this.pushEntry({ kind: "error", text: `rejected: ${reason}` });
    }
  }

  async control(command: ControlCommand): Promise<void> {
    if (!this.missionId) return;
    try {
      await this.client.control(this.missionId, command);
    } catch (err) {
      const reason = err instanceof ApiError ? err.message : String(err);
      this.pushEntry({ kind: "error", text: `${command} rejected: ${reason}` });
    }
  }

  close(): void {
    this.closed = true;
    this.aborter.abort();
  }

  private pushEntry(entry: TranscriptEntry): void {
    this.transcript = [...this.transcript, entry];
    this.refresh();
  }

  private setConnection(state: ConnectionState): void {
    this.connection = state;
    this.refresh();
  }

  private handleEvent(ev: StreamEvent): void {
    if (isGapMarker(ev)) {
      this.setConnection("gap");
      return;
    }
    if (this.connection !== "live") this.setConnection("live");
    this.applySnapshot(ev);
  }

  private async streamLoop(id: string): Promise<void> {
    this.setConnection("connecting");
    while (!this.closed && this.missionId === id) {
      try {
        const fromSeq = this.lastSeq > 0 ? this.lastSeq + 1 : undefined;
        await this.client.stream(
          id,
          fromSeq,
          { onEvent: (ev) => this.handleEvent(ev) },
          this.aborter.signal,
        );
      } catch {
        // connection errors fall through to the reconnect path
      }
      if (this.closed || this.missionId !== id) return;
      if (this.latest && TERMINAL.has(this.latest.status)) {
        // server ends the stream after a current terminal snapshot
        this.setConnection("closed");
        return;
      }
      this.setConnection("reconnecting");
      await delay(this.reconnectDelayMs);
    }
  }
}

interface StartFormValues {
  id: string;
  width: number;
  height: number;
  density: number;
  seed: number;
  planner: "mcts" | "single-shot";
  pace: number;
  instruction: string;
}

/** Local validation before anything is posted; returns an error or null. */
export function validateStartForm(v: StartFormValues): string | null {
  if (!v.id.trim()) return "mission id is required";
  if (!Number.isInteger(v.width) || v.width < 2 || v.width > 64)
    return "width must be an integer in [2, 64]";
  if (!Number.isInteger(v.height) || v.height < 2 || v.height > 64)
    return "height must be an integer in [2, 64]";
  if (!(v.density >= 0) || v.density > 0.5) return "density must be in [0, 0.5]";
  if (!Number.isInteger(v.seed) || v.seed < 0) return "seed must be a non-negative integer";
  if (!(v.pace >= 0) || v.pace > 1) return "pace must be in [0, 1] seconds";
  if (!v.instruction.trim()) return "instruction is required";
  return null;
}

function readStartForm(form: HTMLFormElement): StartFormValues {
  const data = new FormData(form);
  const text = (name: string) => String(data.get(name) ?? "");
  return {
    id: text("id"),
    width: Number(text("width")),
    height: Number(text("height")),
    density: Number(text("density")),
    seed: Number(text("seed")),
    planner: text("planner") === "single-shot" ? "single-shot" : "mcts",
    pace: Number(text("pace")),
    instruction: text("instruction"),
  };
}

export function mountApp(root: HTMLElement, opts: AppOptions = {}): GroundStationApp {
  root.innerHTML = SKELETON;
  const client = opts.client ?? new GroundStationClient(opts.base ?? "");
  const app = new GroundStationApp(root, client, opts);

  const startForm = byId<HTMLFormElement>(root, "start-form");
  const startError = byId<HTMLParagraphElement>(root, "start-error");
  startForm.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const values = readStartForm(startForm);
    const problem = validateStartForm(values);
    if (problem) {
      startError.hidden = false;
      startError.textContent = problem;
      return;
    }
    startError.hidden = true;
    startError.textContent = "";
    void app
      .startMission({
        id: values.id.trim(),
        instruction: values.instruction.trim(),
        planner: values.planner,
        generate: {
          width: values.width,
          height: values.height,
          density: values.density,
          seed: values.seed,
        },
        seed: values.seed,
        pace_s: values.pace,
        target_cr: 1.0,
        replace: true,
      })
      .catch((err) => {
        startError.hidden = false;
        startError.textContent = err instanceof ApiError ? err.message : String(err);
      });
  });

  const chatForm = byId<HTMLFormElement>(root, "chat-form");
  const chatInput = byId<HTMLInputElement>(root, "chat-input");
  const chatSend = byId<HTMLButtonElement>(root, "chat-send");
  const syncSend = () => {
    chatSend.disabled = chatInput.value.trim() === "" || app.missionId === null;
  };
  chatInput.addEventListener("input", syncSend);
  chatForm.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const text = chatInput.value;
    chatInput.value = "";
    syncSend();
    void app.sendInstruction(text).then(syncSend);
  });

  byId<HTMLButtonElement>(root, "pause-btn").addEventListener("click", () => {
    void app.control("pause");
  });
  byId<HTMLButtonElement>(root, "resume-btn").addEventListener("click", () => {
    void app.control("resume");
  });
  byId<HTMLButtonElement>(root, "abort-btn").addEventListener("click", () => {
    void app.control("abort");
  });

  app.refresh();
  return app;
}
