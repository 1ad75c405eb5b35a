/** View state containers. The transcript is append-only: entries are frozen
 * and the array is never spliced, only pushed to. */
import type { AnswerEnvelope } from "./api.js";

export interface TranscriptEntry {
  readonly question: string;
  /** null while the ask is in flight or after a transport failure */
  readonly envelope: AnswerEnvelope | null;
  readonly error: string | null;
}

export class ChatState {
  private entries: TranscriptEntry[] = [];
  pending = false;
  language = "hi";
  readonly sessionId = `console-${Date.now().toString(36)}`;

  get transcript(): readonly TranscriptEntry[] {
    return this.entries;
  }

  /** Starts an entry for a question; returns its index. */
  begin(question: string): number {
    this.entries.push(Object.freeze({ question, envelope: null, error: null }));
    return this.entries.length - 1;
  }

  /** Fills in the outcome of an in-flight entry. The question text never
   * changes; only the (envelope, error) pair is set once. */
  settle(index: number, envelope: AnswerEnvelope | null, error: string | null): void {
    const prev = this.entries[index];
    this.entries[index] = Object.freeze({
      question: prev.question,
      envelope,
      error,
    });
  }
}

export interface ResolutionDraft {
  answer: string;
  theme: string;
  subTheme: string;
}

export class ModerationState {
  items: import("./api.js").ModerationItem[] = [];
  selectedId: string | null = null;
  draft: ResolutionDraft = { answer: "", theme: "", subTheme: "" };
  /** server rail trace from the last failed resolve, if any */
  resolveError: string | null = null;

  get selected() {
    return this.items.find((i) => i.id === this.selectedId) ?? null;
  }

  select(id: string | null): void {
    this.selectedId = id;
    this.draft = { answer: "", theme: "", subTheme: "" };
    this.resolveError = null;
  }

  /** Drops an item locally (after resolve/404) without refetching. */
  remove(id: string): void {
    this.items = this.items.filter((i) => i.id !== id);
    if (this.selectedId === id) this.select(null);
  }
}

const TOKEN_KEYS = { user: "safeqa.userToken", moderator: "safeqa.moderatorToken" };

/** Tokens live in sessionStorage only; nothing is persisted across the
 * browser session or sent anywhere but the Authorization header. */
export class TokenStore {
  constructor(private storage: Storage) {}

  get(role: keyof typeof TOKEN_KEYS): string {
    return this.storage.getItem(TOKEN_KEYS[role]) ?? "";
  }

  set(role: keyof typeof TOKEN_KEYS, value: string): void {
    this.storage.setItem(TOKEN_KEYS[role], value);
  }
}
