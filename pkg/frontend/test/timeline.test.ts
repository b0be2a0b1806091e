import { readFileSync } from "node:fs";

import { describe, expect, it } from "vitest";

import type { ConsoleEvent } from "../src/events.js";
import {
  displayTimeline,
  emptyTimeline,
  reduceTimeline,
  stageSequence,
  type TimelineState,
} from "../src/timeline.js";

// Captured from a real fail-then-fix workflow run against the HTTP surface.
const replay: ConsoleEvent[] = JSON.parse(
  readFileSync(new URL("./fixtures/workflow_events.json", import.meta.url), "utf8"),
);

function reduceAll(events: ConsoleEvent[]): TimelineState {
  return events.reduce(reduceTimeline, emptyTimeline());
}

describe("workflow replay", () => {
  it("reconstructs the exact stage sequence", () => {
    expect(stageSequence(reduceAll(replay))).toEqual([
      "Prechecking",
      "Generating",
      "Running",
      "Correcting",
      "Running",
      "Converged",
    ]);
  });

  it("condenses the loop with per-run outcomes", () => {
    expect(displayTimeline(reduceAll(replay))).toEqual([
      "Generate",
      "Run(fail)",
      "Correct",
      "Run(converged)",
    ]);
  });

  it("agrees with the timeline the server itself reported", () => {
    const report = replay.find((event) => event.kind === "report");
    expect(displayTimeline(reduceAll(replay))).toEqual(
      report?.payload.timeline,
    );
  });

  it("carries the report totals into the pane state", () => {
    const state = reduceAll(replay);
    expect(state.totalTokens).toBe(440);
    expect(state.finalState).toBe("Converged");
    expect(state.iteration).toBe(1);
  });
});

describe("reduceTimeline", () => {
  it("does not mutate its input", () => {
    const before = emptyTimeline();
    reduceTimeline(before, { id: 1, kind: "stage", payload: { name: "x" } });
    expect(before).toEqual(emptyTimeline());
  });

  it("labels runs by classification", () => {
    let state = emptyTimeline();
    state = reduceTimeline(state, {
      id: 1,
      kind: "run",
      payload: { classification: "Converged" },
    });
    state = reduceTimeline(state, {
      id: 2,
      kind: "run",
      payload: { classification: "CompletedNotConverged" },
    });
    state = reduceTimeline(state, {
      id: 3,
      kind: "run",
      payload: { classification: "CrashedEarly" },
    });
    expect(state.runs).toEqual(["Run(converged)", "Run(fail)", "Run(fail)"]);
  });

  it("tracks trial progress during evaluations", () => {
    const state = reduceTimeline(emptyTimeline(), {
      id: 1,
      kind: "trial",
      payload: { index: 4, total: 10 },
    });
    expect(state.trial).toEqual({ index: 4, total: 10 });
  });

  it("keeps unknown event kinds verbatim instead of dropping them", () => {
    const stranger: ConsoleEvent = {
      id: 7,
      kind: "mesh-quality",
      payload: { skewness: 0.3 },
    };
    const state = reduceTimeline(emptyTimeline(), stranger);
    expect(state.raw).toEqual([JSON.stringify(stranger)]);
    expect(stageSequence(state)).toEqual([]);
  });

  it("falls back to a plain Run label when a run event never arrived", () => {
    const state = reduceTimeline(emptyTimeline(), {
      id: 1,
      kind: "stage",
      payload: { name: "Running", iteration: 0 },
    });
    expect(displayTimeline(state)).toEqual(["Run"]);
  });
});
