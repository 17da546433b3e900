/** Browser entry: wires the queue store to a two-pane review layout. */

import { ApiClient } from "./api.js";
import { renderDiffHtml } from "./diff.js";
import { QueueStore } from "./queue.js";
import type { FlagRecord } from "./types.js";

interface Settings {
  endpoint: string;
  token: string;
  contractId: string;
  reviewer: string;
}

function readSettings(): Settings {
  const params = new URLSearchParams(window.location.search);
  return {
    endpoint: params.get("endpoint") ?? sessionStorage.getItem("revkit-endpoint") ?? "http://127.0.0.1:8321",
    token: params.get("token") ?? sessionStorage.getItem("revkit-token") ?? "",
    contractId: params.get("contract") ?? sessionStorage.getItem("revkit-contract") ?? "",
    reviewer: params.get("reviewer") ?? sessionStorage.getItem("revkit-reviewer") ?? "reviewer",
  };
}

function flagRow(flag: FlagRecord, selected: boolean): string {
  const badge =
    flag.confidence_band === "Ambiguous"
      ? '<span class="badge badge-ambiguous">ambiguous</span>'
      : '<span class="badge badge-confident">confident</span>';
  const status = `<span class="status status-${flag.status.toLowerCase()}">${flag.status}</span>`;
  return `
    <li class="flag-row ${selected ? "selected" : ""} band-${flag.confidence_band.toLowerCase()}"
        data-revision="${flag.revision_id}">
      <div class="flag-main">
        <span class="provision">§${flag.provision_number}</span>
        ${badge} ${status}
      </div>
      <div class="flag-meta">p(acceptable) = ${flag.probability_acceptable.toFixed(3)}</div>
    </li>`;
}

export function start(): void {
  const settings = readSettings();
  const api = new ApiClient(settings.endpoint, { token: settings.token || undefined });
  const store = new QueueStore(api, settings.reviewer);

  const queueEl = document.getElementById("queue")!;
  const detailEl = document.getElementById("detail")!;
  const bannerEl = document.getElementById("banner")!;
  const dialogEl = document.getElementById("conflict-dialog")!;

  function render(): void {
    bannerEl.innerHTML = store.banner
      ? `<div class="banner banner-${store.banner.kind}">${store.banner.message}
           <button id="banner-dismiss">×</button></div>`
      : "";
    const open = store.openFlags;
    queueEl.innerHTML = open.length
      ? `<ul>${open.map((f) => flagRow(f, f.revision_id === store.selectedId)).join("")}</ul>`
      : '<div class="empty-state">No open flags. Ingest a contract or reload.</div>';
    renderDetail();
    dialogEl.innerHTML = store.conflict
      ? `<div class="dialog-backdrop"><div class="dialog">
           <h3>Decision conflict</h3>
           <p>${store.conflict.message}</p>
           <p>Another reviewer already decided this flag. Decide anyway?</p>
           <button id="conflict-force">Decide anyway</button>
           <button id="conflict-cancel">Cancel</button>
         </div></div>`
      : "";
    bind();
  }

  function renderDetail(): void {
    const detail = store.detail;
    if (!detail) {
      detailEl.innerHTML = '<div class="empty-state">Select a flag to review.</div>';
      return;
    }
    const candidates = detail.candidates
      .map(
        (candidate, index) => `
        <div class="candidate">
          <div class="candidate-head">
            <strong>Candidate ${index}</strong>
            <span class="reward">reward ${candidate.reward.toFixed(3)}</span>
            ${index === detail.chosen_index ? '<span class="badge badge-chosen">best</span>' : ""}
          </div>
          <div class="candidate-diff">${candidate.diff ? renderDiffHtml(candidate.diff) : candidate.text}</div>
          <button class="accept-candidate" data-index="${index}">Accept candidate ${index}</button>
        </div>`,
      )
      .join("");
    const validation = store.validationError
      ? `<div class="validation-error">${store.validationError}</div>`
      : "";
    detailEl.innerHTML = `
      <h2>§${detail.provision.number} ${detail.provision.title}</h2>
      <h3>Template vs. proposed revision</h3>
      <div class="diff-pane">${renderDiffHtml(detail.diff)}</div>
      <h3>Rewrite candidates</h3>
      ${candidates || '<div class="empty-state">Not optimized yet.</div>'}
      <div class="actions">
        <button id="optimize">Optimize</button>
        <button id="reject">Reject</button>
        <textarea id="edit-text" placeholder="Edited clause text"></textarea>
        <button id="submit-edit">Submit edit</button>
      </div>
      ${validation}`;
  }

  function bind(): void {
    document.getElementById("banner-dismiss")?.addEventListener("click", () => {
      store.dismissBanner();
      render();
    });
    queueEl.querySelectorAll<HTMLElement>(".flag-row").forEach((row) => {
      row.addEventListener("click", async () => {
        await store.select(row.dataset.revision!);
        render();
      });
    });
    document.getElementById("optimize")?.addEventListener("click", async () => {
      await store.optimizeSelected();
      render();
    });
    document.getElementById("reject")?.addEventListener("click", async () => {
      await store.submitDecision("Reject");
      render();
    });
    document.getElementById("submit-edit")?.addEventListener("click", async () => {
      const text = (document.getElementById("edit-text") as HTMLTextAreaElement).value;
      await store.submitDecision("Edit", { finalText: text });
      render();
    });
    detailEl.querySelectorAll<HTMLElement>(".accept-candidate").forEach((button) => {
      button.addEventListener("click", async () => {
        await store.submitDecision("Accept", {
          candidateIndex: Number(button.dataset.index),
        });
        render();
      });
    });
    document.getElementById("conflict-force")?.addEventListener("click", async () => {
      await store.resolveConflictWithForce();
      render();
    });
    document.getElementById("conflict-cancel")?.addEventListener("click", () => {
      store.dismissConflict();
      render();
    });
  }

  void (async () => {
    if (settings.contractId) {
      await store.loadQueue(settings.contractId);
    }
    render();
  })();
}

if (typeof document !== "undefined" && document.getElementById("queue")) {
  start();
}
