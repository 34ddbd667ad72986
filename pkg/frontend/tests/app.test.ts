import { afterEach, describe, expect, it } from "vitest";

import { ApiError } from "../src/api.js";
import { GroundStationApp, mountApp, validateStartForm, type StationApi } from "../src/app.js";
import { SKELETON } from "../src/render.js";
import type { Snapshot, StartMissionRequest, StreamEvent } from "../src/types.js";
import { makeMap, makeSnapshot, waitFor } from "./helpers.js";

const mounted: GroundStationApp[] = [];

afterEach(() => {
  for (const app of mounted.splice(0)) app.close();
  document.body.innerHTML = "";
});

function freshRoot(): HTMLElement {
  const root = document.createElement("div");
  document.body.appendChild(root);
  return root;
}

/** StationApi stub whose stream() plays scripted event batches. */
class FakeApi implements StationApi {
  started: StartMissionRequest[] = [];
  instructions: string[] = [];
  controls: string[] = [];
  ackStep = 12;
  rejectInstruction: ApiError | null = null;
  private batches: StreamEvent[][];

  constructor(batches: StreamEvent[][] = [[]]) {
    this.batches = batches.map((b) => [...b]);
  }

  async startMission(req: StartMissionRequest): Promise<{ id: string; status: string }> {
    this.started.push(req);
    return { id: req.id, status: "Idle" };
  }

  async missionMap() {
    return makeMap();
  }

  async state(): Promise<Snapshot> {
    return makeSnapshot();
  }

  async sendInstruction(_id: string, text: string) {
    if (this.rejectInstruction) throw this.rejectInstruction;
    this.instructions.push(text);
    return { ok: true, scheduled_step: this.ackStep };
  }

  async control(_id: string, command: "pause" | "resume" | "abort") {
    this.controls.push(command);
    return { ok: true };
  }

  async stream(
    _id: string,
    _fromSeq: number | undefined,
    handlers: { onEvent: (ev: StreamEvent) => void },
  ): Promise<void> {
    const batch = this.batches.shift();
    if (batch === undefined) {
      // keep the connection "open" until the app aborts
      await new Promise(() => {});
    }
    for (const ev of batch!) {
      handlers.onEvent(ev);
      await new Promise((resolve) => setTimeout(resolve, 1));
    }
  }
}

function appWith(api: StationApi): { root: HTMLElement; app: GroundStationApp } {
  const root = freshRoot();
  root.innerHTML = SKELETON;
  const app = new GroundStationApp(root, api, { reconnectDelayMs: 5 });
  app.refresh();
  mounted.push(app);
  return { root, app };
}

describe("instruction transcript", () => {
  it("shows the user entry and the ack's scheduled step", async () => {
    const api = new FakeApi([[makeSnapshot({ seq: 2, step: 1 })]]);
    const { root, app } = appWith(api);
    await app.connect("m1");
    await app.sendInstruction("search the top-left quadrant carefully");

    const entries = [...root.querySelectorAll("#transcript .entry")].map((li) => li.textContent);
    expect(entries).toContain("search the top-left quadrant carefully");
    expect(entries).toContain("replanning at step 12");
    expect(api.instructions).toEqual(["search the top-left quadrant carefully"]);
  });

  it("renders a rejection as an inline error entry", async () => {
    const api = new FakeApi([[makeSnapshot({ seq: 2, step: 1 })]]);
    api.rejectInstruction = new ApiError(409, "mission is Failed");
    const { root, app } = appWith(api);
    await app.connect("m1");
    await app.sendInstruction("go north");

    const error = root.querySelector("#transcript .entry.error");
    expect(error?.textContent).toBe("rejected: mission is Failed");
  });

  it("ignores blank input and missing missions", async () => {
    const api = new FakeApi();
    const { app } = appWith(api);
    await app.sendInstruction("   ");
    expect(api.instructions).toEqual([]);
  });
});

describe("stream lifecycle", () => {
  it("reconnects after a dropped stream and closes on terminal", async () => {
    const seen: string[] = [];
    const api = new FakeApi([
      [makeSnapshot({ seq: 2, step: 1 })],
      [makeSnapshot({ seq: 3, step: 2, status: "Complete", cr: 100 })],
    ]);
    const { root, app } = appWith(api);
    const badge = root.querySelector("#conn-badge")!;
    const observer = setInterval(() => {
      const state = badge.getAttribute("data-state");
      if (state && seen[seen.length - 1] !== state) seen.push(state);
    }, 1);
    await app.connect("m1");
    await app.settled();
    clearInterval(observer);

    expect(app.connection).toBe("closed");
    expect(seen).toContain("reconnecting");
    expect(root.querySelector("#banner")!.textContent).toContain("complete");
  });

  it("flags a slow-consumer gap, then returns to live", async () => {
    const api = new FakeApi([
      [
        makeSnapshot({ seq: 2, step: 1 }),
        { resume_from: 9 },
        makeSnapshot({ seq: 9, step: 8 }),
        makeSnapshot({ seq: 10, step: 9, status: "Complete", cr: 100 }),
      ],
    ]);
    const { root, app } = appWith(api);
    const states: string[] = [];
    const badge = root.querySelector("#conn-badge")!;
    const observer = setInterval(() => {
      const state = badge.getAttribute("data-state");
      if (state && states[states.length - 1] !== state) states.push(state);
    }, 1);
    await app.connect("m1");
    await app.settled();
    clearInterval(observer);

    expect(states).toContain("gap");
    expect(app.latest?.seq).toBe(10);
  });

  it("freezes the overlay on abort with a failed badge", async () => {
    const api = new FakeApi([
      [
        makeSnapshot({ seq: 2, step: 1 }),
        makeSnapshot({
          seq: 3,
          step: 1,
          status: "Failed",
          failure_cause: "aborted",
          plan: [
            [0, 1],
            [0, 2],
          ],
        }),
      ],
    ]);
    const { root, app } = appWith(api);
    await app.connect("m1");
    await app.control("abort");
    await app.settled();

    expect(api.controls).toEqual(["abort"]);
    const banner = root.querySelector("#banner")!;
    expect(banner.textContent).toContain("failed");
    expect(banner.textContent).toContain("aborted");
    const frozen = root.querySelector("#plan-line")!.getAttribute("points");
    expect(frozen).toBe("0.5,0.5 1.5,0.5 2.5,0.5");
  });
});

describe("start form", () => {
  it("validates locally and posts nothing on bad input", async () => {
    const api = new FakeApi();
    const root = freshRoot();
    const app = mountApp(root, { client: api, reconnectDelayMs: 5 });
    mounted.push(app);

    const density = root.querySelector<HTMLInputElement>('#start-form [name="density"]')!;
    density.value = "0.9";
    root
      .querySelector("#start-form")!
      .dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
    await waitFor(() => !root.querySelector<HTMLElement>("#start-error")!.hidden, 2000);

    expect(root.querySelector("#start-error")!.textContent).toContain("density");
    expect(api.started).toEqual([]);
  });

  it("posts a generate request once inputs pass", async () => {
    const api = new FakeApi([[makeSnapshot({ seq: 2, step: 1, status: "Complete" })]]);
    const root = freshRoot();
    const app = mountApp(root, { client: api, reconnectDelayMs: 5 });
    mounted.push(app);

    root
      .querySelector("#start-form")!
      .dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
    await waitFor(() => api.started.length === 1, 2000);

    const req = api.started[0]!;
    expect(req.generate).toEqual({ width: 10, height: 10, density: 0.15, seed: 0 });
    expect(req.replace).toBe(true);
    await waitFor(() => app.missionId === "default", 2000);
  });

  it("rejects out-of-range dimensions", () => {
    const base = {
      id: "m",
      width: 10,
      height: 10,
      density: 0.15,
      seed: 0,
      planner: "mcts" as const,
      pace: 0.05,
      instruction: "cover the area",
    };
    expect(validateStartForm(base)).toBeNull();
    expect(validateStartForm({ ...base, width: 1 })).toContain("width");
    expect(validateStartForm({ ...base, height: 95 })).toContain("height");
    expect(validateStartForm({ ...base, density: -0.1 })).toContain("density");
    expect(validateStartForm({ ...base, instruction: " " })).toContain("instruction");
  });
});

describe("chat input gating", () => {
  it("keeps send disabled for empty input", () => {
    const api = new FakeApi();
    const root = freshRoot();
    const app = mountApp(root, { client: api });
    mounted.push(app);

    const input = root.querySelector<HTMLInputElement>("#chat-input")!;
    const send = root.querySelector<HTMLButtonElement>("#chat-send")!;
    expect(send.disabled).toBe(true);
    input.value = "   ";
    input.dispatchEvent(new Event("input", { bubbles: true }));
    expect(send.disabled).toBe(true);
  });
});
