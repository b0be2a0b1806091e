/**
 * Client for the server's event stream.
 *
 * Delivery from the server is at-least-once: on reconnect the stream replays
 * from a cursor, so the same event id can arrive twice. This client keeps the
 * highest id seen and drops anything at or below it, giving subscribers
 * exactly-once rendering. Reconnects back off exponentially and resume from
 * the cursor via the `after` query parameter.
 */

export interface ConsoleEvent {
  id: number;
  kind: string;
  payload: Record<string, unknown>;
}

/** The subset of EventSource the stream needs; injectable for tests. */
export interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  onopen: ((ev: unknown) => void) | null;
  close(): void;
}

export type SourceFactory = (url: string) => EventSourceLike;

export const BASE_DELAY_MS = 1000;
export const MAX_DELAY_MS = 30000;

export function parseEvent(data: string): ConsoleEvent | null {
  let value: unknown;
  try {
    value = JSON.parse(data);
  } catch {
    return null;
  }
  if (typeof value !== "object" || value === null) return null;
  const record = value as Record<string, unknown>;
  if (typeof record.id !== "number" || typeof record.kind !== "string") {
    return null;
  }
  const payload = record.payload;
  return {
    id: record.id,
    kind: record.kind,
    payload:
      typeof payload === "object" && payload !== null
        ? (payload as Record<string, unknown>)
        : {},
  };
}

export interface StreamOptions {
  makeSource?: SourceFactory;
  baseDelayMs?: number;
  maxDelayMs?: number;
}

// browser EventSource handlers take MessageEvent, not the plain {data} shape
function wrapNative(target: string): EventSourceLike {
  const native = new EventSource(target);
  const wrapper: EventSourceLike = {
    onmessage: null,
    onerror: null,
    onopen: null,
    close: () => native.close(),
  };
  native.onmessage = (ev) => wrapper.onmessage?.(ev);
  native.onerror = (ev) => wrapper.onerror?.(ev);
  native.onopen = (ev) => wrapper.onopen?.(ev);
  return wrapper;
}

export class EventStream {
  private source: EventSourceLike | null = null;
  private lastId = 0;
  private attempt = 0;
  private closed = false;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private eventHandlers: Array<(event: ConsoleEvent) => void> = [];
  private statusHandlers: Array<(connected: boolean) => void> = [];
  private readonly makeSource: SourceFactory;
  private readonly baseDelayMs: number;
  private readonly maxDelayMs: number;

  constructor(private readonly url: string, options: StreamOptions = {}) {
    this.makeSource = options.makeSource ?? wrapNative;
    this.baseDelayMs = options.baseDelayMs ?? BASE_DELAY_MS;
    this.maxDelayMs = options.maxDelayMs ?? MAX_DELAY_MS;
  }

  get cursor(): number {
    return this.lastId;
  }

  onEvent(handler: (event: ConsoleEvent) => void): void {
    this.eventHandlers.push(handler);
  }

  onStatus(handler: (connected: boolean) => void): void {
    this.statusHandlers.push(handler);
  }

  connect(): void {
    if (this.closed) return;
    const separator = this.url.includes("?") ? "&" : "?";
    this.source = this.makeSource(
      `${this.url}${separator}after=${this.lastId}`,
    );
    this.source.onopen = () => {
      this.attempt = 0;
      this.announce(true);
    };
    this.source.onmessage = (message) => {
      const event = parseEvent(message.data);
      if (event === null || event.id <= this.lastId) return;
      this.lastId = event.id;
      for (const handler of this.eventHandlers) handler(event);
    };
    this.source.onerror = () => {
      this.source?.close();
      this.source = null;
      this.announce(false);
      this.scheduleReconnect();
    };
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    this.source?.close();
    this.source = null;
  }

  private announce(connected: boolean): void {
    for (const handler of this.statusHandlers) handler(connected);
  }

  private scheduleReconnect(): void {
    if (this.closed || this.reconnectTimer !== null) return;
    const delay = Math.min(
      this.baseDelayMs * 2 ** this.attempt,
      this.maxDelayMs,
    );
    this.attempt++;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.connect();
    }, delay);
  }
}
