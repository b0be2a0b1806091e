/**
 * Pure reducer from the event stream to the workflow-timeline pane.
 *
 * The pane mirrors the server's journal: stage transitions in arrival order,
 * the current correction counter, token totals once a report lands, and a
 * raw line for any event kind this build does not know, so nothing is ever
 * silently dropped.
 */

import type { ConsoleEvent } from "./events.js";

export interface StageEntry {
  name: string;
  iteration: number;
}

export interface TimelineState {
  stages: StageEntry[];
  runs: string[]; // run labels in arrival order, e.g. Run(converged)
  iteration: number;
  totalTokens: number | null;
  finalState: string | null;
  trial: { index: number; total: number } | null;
  raw: string[]; // unknown event kinds, rendered verbatim
}

export function emptyTimeline(): TimelineState {
  return {
    stages: [],
    runs: [],
    iteration: 0,
    totalTokens: null,
    finalState: null,
    trial: null,
    raw: [],
  };
}

function asNumber(value: unknown, fallback = 0): number {
  return typeof value === "number" ? value : fallback;
}

export function reduceTimeline(
  state: TimelineState,
  event: ConsoleEvent,
): TimelineState {
  const next: TimelineState = {
    ...state,
    stages: [...state.stages],
    runs: [...state.runs],
    raw: [...state.raw],
  };
  switch (event.kind) {
    case "stage": {
      const name = String(event.payload.name ?? "");
      const iteration = asNumber(event.payload.iteration);
      next.stages.push({ name, iteration });
      next.iteration = iteration;
      break;
    }
    case "run": {
      const classification = String(event.payload.classification ?? "");
      const label =
        classification === "Converged" ? "Run(converged)" : "Run(fail)";
      next.runs.push(label);
      break;
    }
    case "report": {
      next.totalTokens = asNumber(event.payload.total_tokens, 0);
      next.finalState = String(event.payload.final_state ?? "");
      next.iteration = asNumber(event.payload.iterations, next.iteration);
      break;
    }
    case "trial": {
      next.trial = {
        index: asNumber(event.payload.index),
        total: asNumber(event.payload.total),
      };
      break;
    }
    default:
      next.raw.push(JSON.stringify(event));
  }
  return next;
}

export function stageSequence(state: TimelineState): string[] {
  return state.stages.map((entry) => entry.name);
}

/**
 * The condensed loop view: Generate / Run(...) / Correct in the order the
 * run actually took them. Pre-check and the terminal stage are status, not
 * loop steps, so they are not part of this line.
 */
export function displayTimeline(state: TimelineState): string[] {
  const steps: string[] = [];
  let runCursor = 0;
  for (const entry of state.stages) {
    if (entry.name === "Generating") steps.push("Generate");
    else if (entry.name === "Correcting") steps.push("Correct");
    else if (entry.name === "Running") {
      steps.push(state.runs[runCursor] ?? "Run");
      runCursor++;
    }
  }
  return steps;
}
