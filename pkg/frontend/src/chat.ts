/**
 * Chat pane plumbing: submit prompts, read the session transcript.
 *
 * The server runs one post-processing turn at a time, so submissions are
 * serialized client-side too: a prompt sent while another is in flight waits
 * its turn instead of racing. Empty input never leaves the browser.
 */

export type FetchLike = (
  url: string,
  init?: { method?: string; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export interface TurnReply {
  kind: "turn";
  tool: string;
  summary: string;
  produced: string[];
  isError: boolean;
}

export interface ScriptReply {
  kind: "script";
  path: string;
  warnings: string[];
}

export interface ErrorReply {
  kind: "error";
  message: string;
}

export interface RejectedInput {
  kind: "rejected";
  reason: string;
}

export type ChatReply = TurnReply | ScriptReply | ErrorReply | RejectedInput;

export interface TranscriptTurn {
  request: string;
  tool: string;
  summary: string;
  produced: string[];
  isError: boolean;
}

function toReply(status: number, body: unknown): ChatReply {
  if (typeof body !== "object" || body === null) {
    return { kind: "error", message: `unexpected reply (HTTP ${status})` };
  }
  const record = body as Record<string, unknown>;
  if (typeof record.error === "string") {
    return { kind: "error", message: record.error };
  }
  if (record.kind === "script") {
    return {
      kind: "script",
      path: String(record.path ?? ""),
      warnings: Array.isArray(record.warnings)
        ? record.warnings.map(String)
        : [],
    };
  }
  return {
    kind: "turn",
    tool: String(record.tool ?? ""),
    summary: String(record.summary ?? ""),
    produced: Array.isArray(record.produced) ? record.produced.map(String) : [],
    isError: record.is_error === true,
  };
}

export class ChatClient {
  private tail: Promise<unknown> = Promise.resolve();
  private waiting = 0;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike,
  ) {}

  /** Prompts queued behind the one in flight. */
  get pending(): number {
    return this.waiting;
  }

  submit(text: string): Promise<ChatReply> {
    const trimmed = text.trim();
    if (trimmed === "") {
      return Promise.resolve({ kind: "rejected", reason: "empty prompt" });
    }
    this.waiting++;
    const turn = this.tail.then(() => this.post(trimmed));
    this.tail = turn.catch(() => undefined);
    return turn.finally(() => {
      this.waiting--;
    });
  }

  private async post(text: string): Promise<ChatReply> {
    let response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}/prompt`, {
        method: "POST",
        body: JSON.stringify({ text }),
      });
    } catch (failure) {
      return { kind: "error", message: `request failed: ${failure}` };
    }
    return toReply(response.status, await response.json());
  }

  async transcript(): Promise<TranscriptTurn[]> {
    const response = await this.fetchImpl(`${this.baseUrl}/transcript`);
    const body = await response.json();
    if (!Array.isArray(body)) return [];
    return body.map((entry) => {
      const record = (entry ?? {}) as Record<string, unknown>;
      return {
        request: String(record.request ?? ""),
        tool: String(record.tool ?? ""),
        summary: String(record.summary ?? ""),
        produced: Array.isArray(record.produced)
          ? record.produced.map(String)
          : [],
        isError: record.is_error === true,
      };
    });
  }
}
