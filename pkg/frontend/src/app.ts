/** Single-page console with two hash routes: #/chat for learners and
 * #/moderation for moderators. The shell is built once; only the dynamic
 * regions (transcript, queue, detail panel) re-render on state changes. */
import {
  ApiClient,
  ApiError,
  NetworkError,
  type AnswerEnvelope,
  type Verdict,
} from "./api.js";
import { ChatState, ModerationState, TokenStore } from "./state.js";

export interface MountOptions {
  baseUrl: string;
  storage?: Storage;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function verdictLines(label: string, verdict: Verdict | null): HTMLElement[] {
  if (!verdict) return [];
  const head = el("div", "trace-line", `${label}: ${verdict.action}`);
  const out = [head];
  if (verdict.triggered.length) {
    out.push(
      el("div", "trace-line trace-rules", `rules: ${verdict.triggered.join(", ")}`),
    );
  }
  for (const note of verdict.notes) {
    out.push(el("div", "trace-line trace-note", `note: ${note}`));
  }
  return out;
}

function railTrace(envelope: AnswerEnvelope): HTMLElement {
  const wrap = el("div", "rail-inspector");
  const toggle = el("button", "rail-toggle", "guardrail trace");
  toggle.type = "button";
  const panel = el("div", "rail-trace");
  panel.hidden = true;
  panel.append(
    ...verdictLines("input", envelope.rail_report.input_verdict),
    ...verdictLines("output", envelope.rail_report.output_verdict),
  );
  if (!panel.childElementCount) {
    panel.append(el("div", "trace-line", "no rails fired"));
  }
  toggle.addEventListener("click", () => {
    panel.hidden = !panel.hidden;
  });
  wrap.append(toggle, panel);
  return wrap;
}

function maybePlay(uri: string): void {
  // jsdom and headless runs have no Audio; playback is best-effort
  try {
    if (typeof Audio !== "undefined") {
      void new Audio(uri).play()?.catch(() => undefined);
    }
  } catch {
    /* ignore */
  }
}

export class ConsoleApp {
  readonly chat = new ChatState();
  readonly moderation = new ModerationState();
  private tokens: TokenStore;
  private userApi: ApiClient;
  private modApi: ApiClient;
  private root: HTMLElement;

  constructor(root: HTMLElement, options: MountOptions) {
    this.root = root;
    this.tokens = new TokenStore(options.storage ?? window.sessionStorage);
    this.userApi = new ApiClient(options.baseUrl, () => this.tokens.get("user"));
    this.modApi = new ApiClient(options.baseUrl, () =>
      this.tokens.get("moderator"),
    );
    this.buildShell();
    window.addEventListener("hashchange", () => this.route());
    this.route();
  }

  // -- shell ----------------------------------------------------------------

  private buildShell(): void {
    this.root.innerHTML = `
      <nav class="topnav">
        <a id="nav-chat" href="#/chat">Chat</a>
        <a id="nav-moderation" href="#/moderation">Moderation</a>
        <span id="toast" class="toast" hidden></span>
      </nav>
      <section id="view-chat" hidden>
        <div class="auth-row">
          <label>access token
            <input id="token-user" type="password" autocomplete="off">
          </label>
          <span id="chat-auth-note" class="auth-note" hidden></span>
        </div>
        <div class="ask-row">
          <select id="lang-select">
            <option value="hi" selected>hi</option>
            <option value="en">en</option>
          </select>
          <input id="ask-input" type="text" placeholder="Ask a question">
          <button id="ask-button" type="button">Ask</button>
        </div>
        <ol id="transcript" class="transcript"></ol>
      </section>
      <section id="view-moderation" hidden>
        <div class="auth-row">
          <label>moderator token
            <input id="token-moderator" type="password" autocomplete="off">
          </label>
          <button id="queue-refresh" type="button">Refresh queue</button>
          <span id="queue-error" class="auth-note" hidden></span>
        </div>
        <div class="mod-columns">
          <ul id="queue-list" class="queue"></ul>
          <div id="item-detail" class="detail"></div>
        </div>
      </section>
    `;
    const userToken = this.input("token-user");
    userToken.value = this.tokens.get("user");
    userToken.addEventListener("change", () =>
      this.tokens.set("user", userToken.value),
    );
    const modToken = this.input("token-moderator");
    modToken.value = this.tokens.get("moderator");
    modToken.addEventListener("change", () =>
      this.tokens.set("moderator", modToken.value),
    );
    this.select("lang-select").addEventListener("change", () => {
      this.chat.language = this.select("lang-select").value;
    });
    this.button("ask-button").addEventListener("click", () => {
      void this.ask(this.input("ask-input").value);
    });
    this.input("ask-input").addEventListener("keydown", (event) => {
      if ((event as KeyboardEvent).key === "Enter") {
        void this.ask(this.input("ask-input").value);
      }
    });
    this.button("queue-refresh").addEventListener("click", () => {
      void this.refreshQueue();
    });
  }

  private route(): void {
    const hash = window.location.hash || "#/chat";
    const onChat = hash !== "#/moderation";
    (this.root.querySelector("#view-chat") as HTMLElement).hidden = !onChat;
    (this.root.querySelector("#view-moderation") as HTMLElement).hidden = onChat;
  }

  // -- chat -----------------------------------------------------------------

  async ask(question: string): Promise<void> {
    const text = question.trim();
    if (!text || this.chat.pending) return; // one in-flight ask per session
    this.chat.pending = true;
    this.button("ask-button").disabled = true;
    this.note("chat-auth-note", null);
    const index = this.chat.begin(text);
    this.renderTranscript();
    try {
      const envelope = await this.userApi.ask(
        text,
        this.chat.language,
        this.chat.sessionId,
      );
      this.chat.settle(index, envelope, null);
      if (envelope.answer_audio) maybePlay(envelope.answer_audio.uri);
    } catch (err) {
      if (err instanceof ApiError && err.status === 401) {
        this.note("chat-auth-note", "unauthorized: enter a valid access token");
        this.input("token-user").focus();
        this.chat.settle(index, null, "unauthorized");
      } else if (err instanceof ApiError) {
        this.chat.settle(index, null, `${err.code}: ${err.message}`);
      } else if (err instanceof NetworkError) {
        this.chat.settle(index, null, "service unreachable");
      } else {
        this.chat.settle(index, null, "unexpected failure");
      }
    } finally {
      this.chat.pending = false;
      this.button("ask-button").disabled = false;
      this.input("ask-input").value = "";
      this.renderTranscript();
    }
  }

  private renderTranscript(): void {
    const list = this.root.querySelector("#transcript") as HTMLElement;
    list.innerHTML = "";
    for (const entry of this.chat.transcript) {
      const item = el("li", "entry");
      item.append(el("div", "question", entry.question));
      if (entry.envelope) {
        const envelope = entry.envelope;
        const badge = el("span", "badge", envelope.route_taken);
        badge.dataset.route = envelope.route_taken;
        item.append(badge);
        item.append(el("div", "answer", envelope.answer_text));
        const record = envelope.provenance?.["record_id"];
        if (envelope.route_taken === "retrieval" && typeof record === "string") {
          const link = el("a", "provenance", record);
          link.href = `#/record/${encodeURIComponent(record)}`;
          item.append(link);
        }
        if (envelope.moderation_id) {
          item.append(el("span", "mod-ref", envelope.moderation_id));
        }
        if (envelope.answer_audio) {
          item.append(el("span", "audio-note", envelope.answer_audio.uri));
        }
        item.append(railTrace(envelope));
      } else if (entry.error) {
        item.append(el("div", "error", entry.error));
        if (entry.error !== "unauthorized") {
          const retry = el("button", "retry-button", "retry");
          retry.type = "button";
          retry.addEventListener("click", () => void this.ask(entry.question));
          item.append(retry);
        }
      } else {
        item.append(el("div", "pending", "…"));
      }
      list.append(item);
    }
  }

  // -- moderation -----------------------------------------------------------

  async refreshQueue(): Promise<void> {
    this.note("queue-error", null);
    try {
      const page = await this.modApi.queue("open");
      this.moderation.items = page.items;
      if (
        this.moderation.selectedId &&
        !page.items.some((i) => i.id === this.moderation.selectedId)
      ) {
        this.moderation.select(null);
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 401) {
        this.note("queue-error", "unauthorized: enter a moderator token");
        this.input("token-moderator").focus();
      } else {
        this.note("queue-error", "queue unavailable, try again");
      }
      this.moderation.items = [];
    }
    this.renderQueue();
    this.renderDetail();
  }

  private renderQueue(): void {
    const list = this.root.querySelector("#queue-list") as HTMLElement;
    list.innerHTML = "";
    if (!this.moderation.items.length) {
      list.append(el("li", "empty-state", "no open items"));
      return;
    }
    for (const item of this.moderation.items) {
      const row = el("li", "queue-item");
      row.dataset.id = item.id;
      row.append(
        el("span", "queue-id", item.id),
        el("span", "queue-reason", item.reason),
      );
      row.addEventListener("click", () => {
        this.moderation.select(item.id);
        this.renderQueue();
        this.renderDetail();
      });
      if (item.id === this.moderation.selectedId) row.classList.add("selected");
      list.append(row);
    }
  }

  private renderDetail(): void {
    const detail = this.root.querySelector("#item-detail") as HTMLElement;
    detail.innerHTML = "";
    const item = this.moderation.selected;
    if (!item) {
      detail.append(el("div", "empty-state", "select an item"));
      return;
    }
    detail.append(
      el("div", "item-query", item.query_text),
      el("div", "item-reason", item.reason),
    );
    const answer = el("textarea", "draft-answer");
    answer.id = "draft-answer";
    answer.value = this.moderation.draft.answer;
    const theme = el("input", "draft-theme");
    theme.id = "draft-theme";
    theme.placeholder = "theme";
    theme.value = this.moderation.draft.theme;
    const subTheme = el("input", "draft-subtheme");
    subTheme.id = "draft-subtheme";
    subTheme.placeholder = "sub-theme";
    subTheme.value = this.moderation.draft.subTheme;
    const resolve = el("button", "resolve-button", "Publish answer");
    resolve.id = "resolve-button";
    resolve.type = "button";
    resolve.disabled = !this.moderation.draft.answer.trim();
    answer.addEventListener("input", () => {
      this.moderation.draft.answer = answer.value;
      resolve.disabled = !answer.value.trim();
    });
    theme.addEventListener("input", () => {
      this.moderation.draft.theme = theme.value;
    });
    subTheme.addEventListener("input", () => {
      this.moderation.draft.subTheme = subTheme.value;
    });
    resolve.addEventListener("click", () => void this.resolveSelected());
    const error = el("div", "resolve-error");
    error.id = "resolve-error";
    error.hidden = this.moderation.resolveError === null;
    error.textContent = this.moderation.resolveError ?? "";
    detail.append(answer, theme, subTheme, resolve, error);
  }

  async resolveSelected(): Promise<void> {
    const item = this.moderation.selected;
    if (!item || !this.moderation.draft.answer.trim()) return;
    try {
      const receipt = await this.modApi.resolve(
        item.id,
        this.moderation.draft.answer,
        this.moderation.draft.theme,
        this.moderation.draft.subTheme,
      );
      this.moderation.remove(item.id); // leaves the open list, no refetch
      this.toast(
        `published ${receipt.record_id} (corpus v${receipt.corpus_version})`,
      );
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.moderation.remove(item.id); // stale: someone else handled it
        this.toast("item no longer exists");
      } else if (err instanceof ApiError) {
        // 409/422 keep the item; the message carries the rail trace
        this.moderation.resolveError = err.message;
      } else {
        this.moderation.resolveError = "service unreachable, try again";
      }
    }
    this.renderQueue();
    this.renderDetail();
  }

  // -- small helpers --------------------------------------------------------

  private toast(message: string): void {
    const toast = this.root.querySelector("#toast") as HTMLElement;
    toast.textContent = message;
    toast.hidden = false;
  }

  private note(id: string, message: string | null): void {
    const node = this.root.querySelector(`#${id}`) as HTMLElement;
    node.hidden = message === null;
    node.textContent = message ?? "";
  }

  private input(id: string): HTMLInputElement {
    return this.root.querySelector(`#${id}`) as HTMLInputElement;
  }

  private select(id: string): HTMLSelectElement {
    return this.root.querySelector(`#${id}`) as HTMLSelectElement;
  }

  private button(id: string): HTMLButtonElement {
    return this.root.querySelector(`#${id}`) as HTMLButtonElement;
  }
}

export function mount(root: HTMLElement, options: MountOptions): ConsoleApp {
  return new ConsoleApp(root, options);
}
