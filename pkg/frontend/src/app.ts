/**
 * Page wiring: one event-stream subscription feeding three panes through a
 * single render pass per event. All state funnels through the pure reducers,
 * so a full refresh rebuilds the same view from /transcript plus the replayed
 * stream.
 */

import { ChatClient, type ChatReply } from "./chat.js";
import { EventStream, type ConsoleEvent } from "./events.js";
import {
  chartPaths,
  chartSeries,
  emptyArtifacts,
  parseColumns,
  reduceArtifacts,
  scatterSvg,
  type ArtifactsState,
} from "./artifacts.js";
import {
  displayTimeline,
  emptyTimeline,
  reduceTimeline,
  stageSequence,
  type TimelineState,
} from "./timeline.js";

// served alongside the API by default; ?api=http://host:port points elsewhere
const base =
  new URLSearchParams(window.location.search).get("api") ??
  window.location.origin;
const chat = new ChatClient(base, (url, init) => fetch(url, init));
const stream = new EventStream(`${base}/events`);

let timeline: TimelineState = emptyTimeline();
let artifacts: ArtifactsState = emptyArtifacts();
const renderedCharts = new Set<string>();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

function appendLine(pane: HTMLElement, text: string, cls = ""): void {
  const line = document.createElement("div");
  line.textContent = text;
  if (cls) line.className = cls;
  pane.appendChild(line);
  pane.scrollTop = pane.scrollHeight;
}

function renderTimeline(): void {
  el("stages").textContent = stageSequence(timeline).join(" → ");
  el("loop").textContent = displayTimeline(timeline).join(" → ");
  el("iteration").textContent = `corrections: ${timeline.iteration}`;
  el("tokens").textContent =
    timeline.totalTokens === null ? "" : `tokens: ${timeline.totalTokens}`;
  if (timeline.finalState !== null) {
    el("final").textContent = timeline.finalState;
  }
  const rawPane = el("raw-events");
  rawPane.textContent = timeline.raw.join("\n");
}

async function renderCharts(): Promise<void> {
  const pane = el("charts");
  for (const path of chartPaths(artifacts)) {
    if (renderedCharts.has(path)) continue;
    renderedCharts.add(path);
    const holder = document.createElement("figure");
    holder.dataset.path = path;
    pane.appendChild(holder);
    try {
      const response = await fetch(`${base}/files/${path}`);
      const table = parseColumns(await response.text());
      holder.innerHTML = scatterSvg(chartSeries(table), path);
      const caption = document.createElement("figcaption");
      caption.textContent = path;
      holder.appendChild(caption);
    } catch (failure) {
      holder.textContent = `${path}: ${failure}`;
    }
  }
}

function renderFiles(): void {
  const pane = el("files");
  pane.textContent = "";
  for (const path of artifacts.files) {
    const link = document.createElement("a");
    link.href = `${base}/files/${path}`;
    link.textContent = path;
    pane.appendChild(link);
  }
}

function onEvent(event: ConsoleEvent): void {
  timeline = reduceTimeline(timeline, event);
  artifacts = reduceArtifacts(artifacts, event);
  if (event.kind === "tool-invocation") {
    appendLine(
      el("chat-log"),
      `${event.payload.tool}: ${event.payload.summary}`,
      event.payload.is_error === true ? "error" : "tool",
    );
  }
  renderTimeline();
  renderFiles();
  void renderCharts();
}

function describe(reply: ChatReply): string {
  switch (reply.kind) {
    case "turn":
      return reply.summary;
    case "script":
      return `script written to ${reply.path}`;
    case "error":
      return `error: ${reply.message}`;
    case "rejected":
      return reply.reason;
  }
}

async function main(): Promise<void> {
  const input = el<HTMLInputElement>("prompt");
  const form = el<HTMLFormElement>("prompt-form");
  form.addEventListener("submit", (submitEvent) => {
    submitEvent.preventDefault();
    const text = input.value;
    input.value = "";
    if (text.trim() === "") return;
    appendLine(el("chat-log"), `> ${text}`, "prompt");
    if (chat.pending > 0) appendLine(el("chat-log"), "(queued)", "status");
    void chat.submit(text).then((reply) => {
      appendLine(
        el("chat-log"),
        describe(reply),
        reply.kind === "error" ? "error" : "reply",
      );
    });
  });

  stream.onStatus((connected) => {
    el("banner").hidden = connected;
  });
  stream.onEvent(onEvent);
  stream.connect();

  for (const turn of await chat.transcript()) {
    appendLine(el("chat-log"), `> ${turn.request}`, "prompt");
    appendLine(el("chat-log"), turn.summary, turn.isError ? "error" : "reply");
  }
}

void main();
