/** The negotiation board: thirteen topics, their proposals, and everyone's
 * votes. Projection first (pure), DOM after — the board is a straight
 * rendering of one `GET /sessions/{id}` response plus the viewer identity. */

import { TOPIC_KEYS, type ProposalDoc, type SessionDoc } from "../types.js";

export interface ProposalRow {
  proposalId: string;
  author: string;
  payloadText: string;
  state: ProposalDoc["state"];
  votes: Array<{ participant: string; vote: string }>;
  /** whether the viewer still gets Accept/Reject buttons on this row */
  votable: boolean;
}

export interface TopicRow {
  key: string;
  agreed: boolean;
  agreedPayloadText: string | null;
  proposals: ProposalRow[];
  /** the propose form shows only while the session is open to the viewer */
  proposable: boolean;
}

export interface SessionBoardModel {
  sessionId: string;
  version: number;
  status: SessionDoc["status"];
  participants: string[];
  contractId: string | null;
  topics: TopicRow[];
  agreedCount: number;
  /** seal button: every topic agreed, session still open, viewer a member */
  sealable: boolean;
}

export function projectSessionBoard(session: SessionDoc, viewer: string): SessionBoardModel {
  const member = session.participants.includes(viewer);
  const open = session.status === "Open";

  const topics: TopicRow[] = [];
  // fixed ordering: contract topics first, anything custom after
  const keys = [
    ...TOPIC_KEYS.filter((k) => k in session.topics),
    ...Object.keys(session.topics).filter((k) => !(TOPIC_KEYS as readonly string[]).includes(k)),
  ];
  for (const key of keys) {
    const topic = session.topics[key];
    if (!topic) continue;
    const agreedId = topic.agreed_proposal_id;
    const proposals = topic.proposals.map((p): ProposalRow => ({
      proposalId: p.proposal_id,
      author: p.author,
      payloadText: JSON.stringify(p.payload),
      state: p.state,
      votes: Object.entries(p.votes).map(([participant, vote]) => ({ participant, vote })),
      votable: open && member && p.state === "Proposed" && !(viewer in p.votes) && p.author !== viewer,
    }));
    topics.push({
      key,
      agreed: agreedId !== null,
      agreedPayloadText:
        agreedId === null
          ? null
          : (proposals.find((p) => p.proposalId === agreedId)?.payloadText ?? null),
      proposals,
      proposable: open && member && agreedId === null,
    });
  }

  const agreedCount = topics.filter((t) => t.agreed).length;
  return {
    sessionId: session.session_id,
    version: session.version,
    status: session.status,
    participants: session.participants,
    contractId: session.contract_id,
    topics,
    agreedCount,
    sealable: open && member && topics.length > 0 && topics.every((t) => t.agreed),
  };
}

export interface SessionBoardHandlers {
  onPropose(topic: string, payloadText: string): void;
  onVote(proposalId: string, vote: "Accept" | "Reject"): void;
  onSeal(): void;
  onRenegotiate?(): void;
}

function el(tag: string, attrs: Record<string, string>, text?: string): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderSessionBoard(
  container: HTMLElement,
  model: SessionBoardModel,
  handlers: SessionBoardHandlers,
): void {
  container.innerHTML = "";
  container.classList.add("session-board");

  const head = el("header", { class: "board-head" });
  head.appendChild(el("h2", {}, `negotiation ${model.sessionId} (v${model.version})`));
  const badge = el("span", { class: "status-badge", "data-status": model.status }, model.status);
  head.appendChild(badge);
  head.appendChild(
    el("span", { class: "progress" }, `${model.agreedCount}/${model.topics.length} topics agreed`),
  );
  if (model.contractId) {
    head.appendChild(
      el("a", { class: "contract-link", href: `#/contracts/${model.contractId}` }, model.contractId),
    );
  }
  container.appendChild(head);

  const errorBox = el("p", { class: "inline-error", role: "alert", hidden: "" });
  container.appendChild(errorBox);

  for (const topic of model.topics) {
    const section = el("section", { class: "topic", "data-topic": topic.key });
    const h = el("h3", {}, topic.key);
    h.appendChild(
      el(
        "span",
        { class: "topic-state", "data-state": topic.agreed ? "Agreed" : "Open" },
        topic.agreed ? "Agreed" : "Open",
      ),
    );
    section.appendChild(h);
    if (topic.agreedPayloadText !== null) {
      section.appendChild(el("code", { class: "agreed-payload" }, topic.agreedPayloadText));
    }

    for (const row of topic.proposals) {
      const div = el("div", { class: "proposal", "data-proposal": row.proposalId, "data-state": row.state });
      div.appendChild(el("code", {}, row.payloadText));
      div.appendChild(el("span", { class: "author" }, `by ${row.author}`));
      for (const v of row.votes) {
        div.appendChild(el("span", { class: "vote" }, `${v.participant}: ${v.vote}`));
      }
      if (row.votable) {
        for (const choice of ["Accept", "Reject"] as const) {
          const btn = el("button", { class: `vote-btn vote-${choice.toLowerCase()}` }, choice);
          btn.addEventListener("click", () => handlers.onVote(row.proposalId, choice));
          div.appendChild(btn);
        }
      }
      section.appendChild(div);
    }

    if (topic.proposable) {
      const form = el("div", { class: "propose-form" });
      const input = el("textarea", { class: "payload-input", placeholder: "payload (JSON)" }) as HTMLTextAreaElement;
      const btn = el("button", { class: "propose-btn" }, "propose");
      btn.addEventListener("click", () => handlers.onPropose(topic.key, input.value));
      form.appendChild(input);
      form.appendChild(btn);
      section.appendChild(form);
    }
    container.appendChild(section);
  }

  if (model.sealable) {
    const seal = el("button", { class: "seal-btn" }, "seal contract");
    seal.addEventListener("click", () => handlers.onSeal());
    container.appendChild(seal);
  }
  if (model.status === "Sealed" && handlers.onRenegotiate) {
    const again = el("button", { class: "renegotiate-btn" }, "request renegotiation");
    again.addEventListener("click", () => handlers.onRenegotiate!());
    container.appendChild(again);
  }
}

/** Views render API failures inline, quoting the server's error code. */
export function showInlineError(container: HTMLElement, code: string, detail: string): void {
  const box = container.querySelector<HTMLElement>("[role=alert]");
  if (!box) return;
  box.textContent = `${code}: ${detail}`;
  box.removeAttribute("hidden");
}
