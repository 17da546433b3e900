/** Render server-computed edit scripts; the client never re-diffs text. */

import type { EditOp } from "./types.js";

export interface DiffSegment {
  kind: "keep" | "insert" | "delete";
  text: string;
}

export function toSegments(ops: EditOp[]): DiffSegment[] {
  return ops
    .filter((op) => op.tokens.length > 0)
    .map((op) => ({
      kind: op.op.toLowerCase() as DiffSegment["kind"],
      text: op.tokens.join(" "),
    }));
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Side-by-side friendly markup: ins/del/span tokens joined by spaces. */
export function renderDiffHtml(ops: EditOp[]): string {
  return toSegments(ops)
    .map((segment) => {
      const safe = escapeHtml(segment.text);
      switch (segment.kind) {
        case "insert":
          return `<ins class="diff-insert">${safe}</ins>`;
        case "delete":
          return `<del class="diff-delete">${safe}</del>`;
        case "keep":
          return `<span class="diff-keep">${safe}</span>`;
      }
    })
    .join(" ");
}
