import { describe, expect, it } from "vitest";

import { SseParser } from "../src/api.js";
import { isGapMarker } from "../src/types.js";

describe("SseParser", () => {
  it("parses a single complete frame", () => {
    const parser = new SseParser();
    const events = parser.push('data: {"seq": 1, "step": 0}\n\n');
    expect(events).toEqual([{ seq: 1, step: 0 }]);
  });

  it("holds partial frames until the terminator arrives", () => {
    const parser = new SseParser();
    expect(parser.push('data: {"seq"')).toEqual([]);
    expect(parser.push(": 2}")).toEqual([]);
    expect(parser.push("\n\n")).toEqual([{ seq: 2 }]);
  });

  it("returns every frame completed by one chunk", () => {
    const parser = new SseParser();
    const events = parser.push('data: {"seq": 1}\n\ndata: {"seq": 2}\n\ndata: {"seq": 3}\n\n');
    expect(events.map((e) => (e as { seq: number }).seq)).toEqual([1, 2, 3]);
  });

  it("accepts CRLF line endings", () => {
    const parser = new SseParser();
    const events = parser.push('data: {"seq": 7}\r\n\r\n');
    expect(events).toEqual([{ seq: 7 }]);
  });

  it("ignores comment and unknown-field lines", () => {
    const parser = new SseParser();
    const events = parser.push(': keepalive\n\nretry: 1000\n\ndata: {"seq": 4}\n\n');
    expect(events).toEqual([{ seq: 4 }]);
  });

  it("distinguishes gap markers from snapshots", () => {
    const parser = new SseParser();
    const events = parser.push('data: {"resume_from": 31}\n\ndata: {"seq": 31, "step": 30}\n\n');
    expect(events).toHaveLength(2);
    expect(isGapMarker(events[0]!)).toBe(true);
    expect(isGapMarker(events[1]!)).toBe(false);
  });
});
