#!/usr/bin/env python3
"""Seed a self-contained demo workspace (offline providers, trained model).

Builds a labeled corpus over two cleanly separable vocabularies, embeds it
with the fallback embedder, trains classifier v1, and writes a review
contract whose provisions produce one confident flag, one ambiguous flag,
and one clean pass. The scripted LLM replies with an in-distribution
rewrite, so the whole review loop (classify -> optimize -> decide ->
retrain) runs with no network.

Usage: python3 scripts/seed_demo.py [workspace_dir]
"""

import json
import sys
from pathlib import Path

from revkit.corpus import Label, Revision, Source
from revkit.service.config import load_config
from revkit.service.engine import Engine
from revkit.service.workspace import Workspace

PAYMENT_TEMPLATE = "payment invoice due within 30 days of receipt per schedule"
LIABILITY_TEMPLATE = "liability capped limited to fees paid in year one"
OPTIMIZE_REPLY = "payment invoice due within thirty days of receipt per schedule"

REVIEW_CONTRACT = {
    "id": "contract-under-review",
    "kind": "Service",
    "provisions": [
        {"number": "2", "title": "Payment", "template_text": PAYMENT_TEMPLATE,
         "text": "payment obligation waived deferred indefinitely forever going forward"},
        {"number": "3", "title": "Schedule", "template_text": PAYMENT_TEMPLATE,
         "text": "payment invoice due within 45 days of receipt per schedule"},
        {"number": "5", "title": "Liability", "template_text": LIABILITY_TEMPLATE,
         "text": LIABILITY_TEMPLATE},
        {"number": "7", "title": "Hybrid", "template_text": PAYMENT_TEMPLATE,
         "text": "payment invoice due waived deferred receipt forever schedule"},
    ],
}


def labeled_corpus() -> list[Revision]:
    revisions = []

    def add(rid, text, label, provision):
        revisions.append(Revision(
            id=rid, provision_number=provision, contract_id="demo-corpus",
            text=text, label=label, source=Source.FALLBACK,
        ))

    for i in range(20):
        add(f"ap{i:02d}", f"payment invoice due within {20 + i} days of receipt per schedule",
            Label.ACCEPTABLE, "2")
        add(f"up{i:02d}", f"payment obligation waived deferred indefinitely forever case {i}",
            Label.UNACCEPTABLE, "2")
        add(f"al{i:02d}", f"liability capped limited to fees paid in year {i}",
            Label.ACCEPTABLE, "5")
        add(f"ul{i:02d}", f"unlimited liability indemnify all claims losses whatsoever {i}",
            Label.UNACCEPTABLE, "5")
    return revisions


def main() -> None:
    root = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-workspace")
    root.mkdir(parents=True, exist_ok=True)
    script = root / "llm-script.jsonl"
    script.write_text(json.dumps({"reply": OPTIMIZE_REPLY}) + "\n", encoding="utf-8")
    config = {
        "llm": {"kind": "scripted", "script_path": str(script), "cycle": True},
        "classifier": {"K": 1, "epochs": 500, "seed": 0},
        "optimization": {"n_demonstrations": 2, "best_of_n": 2, "seed": 0},
        "service": {"retrain_min_decisions": 1},
    }
    workspace = Workspace.init(root, config=config)
    engine = Engine(workspace, load_config(workspace.config_path, env={}))
    if not workspace.load_revisions():
        workspace.append_revisions(labeled_corpus())
    embedded = engine.embed_missing()
    version = engine.train_model()["version"] if workspace.current_model_version() is None else workspace.current_model_version()
    contract_file = root / "review-contract.json"
    contract_file.write_text(json.dumps(REVIEW_CONTRACT, indent=2), encoding="utf-8")
    print(json.dumps({
        "workspace": str(root),
        "embedded": embedded,
        "model_version": version,
        "contract_file": str(contract_file),
    }))


if __name__ == "__main__":
    main()
