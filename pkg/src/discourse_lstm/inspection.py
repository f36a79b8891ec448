"""Relation/hierarchy tensor magnitudes and per-EDU salience coloring."""

from __future__ import annotations

import html
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .model import ModelParams, is_discourse, is_nary
from .tree import RST_RELATIONS, DiscourseTree, Hierarchy

SALIENCE_METHOD = ("leaf-to-root mean of max-normalized Frobenius norms of the U^(u) relation slices, "
                   "min-max rescaled within the document")


class UnsupportedVariantError(ValueError):
    pass


class ExportError(ValueError):
    pass


def _require_discourse(params: ModelParams) -> None:
    if not is_discourse(params.variant):
        raise UnsupportedVariantError(f"{params.variant} has no relation or hierarchy tensors")


def _u_candidate_names(params: ModelParams) -> list[str]:
    return ["U_u1", "U_u2"] if is_nary(params.variant) else ["U_u"]


@dataclass
class RelationWeightReport:
    relations: list[str]
    norms: list[float]
    normalized: list[float]
    rank: list[str]
    degenerate: list[str]

    def to_dict(self) -> dict:
        return asdict(self)

    def weight(self, relation: str) -> float:
        return self.normalized[self.relations.index(relation)]


def relation_norms(params: ModelParams) -> np.ndarray:
    """Frobenius norm of U^(u)[r] for every relation index (N-ary: both positions together)."""
    _require_discourse(params)
    sq = sum(np.einsum("rij,rij->r", params[k], params[k]) for k in _u_candidate_names(params))
    return np.sqrt(sq)


def relation_weights(params: ModelParams) -> RelationWeightReport:
    norms = relation_norms(params)[: len(RST_RELATIONS)]
    top = norms.max()
    normalized = norms / top if top > 0 else np.zeros_like(norms)
    names = [r.value for r in RST_RELATIONS]
    order = sorted(range(len(names)), key=lambda i: (-normalized[i], i))
    return RelationWeightReport(
        relations=names,
        norms=[float(v) for v in norms],
        normalized=[float(v) for v in normalized],
        rank=[names[i] for i in order],
        degenerate=[names[i] for i in range(len(names)) if norms[i] == 0.0],
    )


@dataclass
class HierarchyWeights:
    tensor: str
    nucleus: float
    satellite: float
    normalized: tuple[float, float]

    @property
    def ratio(self) -> float:
        return self.nucleus / self.satellite if self.satellite else float("inf")


def hierarchy_weights(params: ModelParams) -> dict[str, HierarchyWeights]:
    """Nucleus vs satellite Frobenius norms for ``W_h`` and ``W_c``."""
    _require_discourse(params)
    out = {}
    for name in ("W_h", "W_c"):
        nuc = float(np.linalg.norm(params[name][Hierarchy.NUCLEUS.index]))
        sat = float(np.linalg.norm(params[name][Hierarchy.SATELLITE.index]))
        top = max(nuc, sat)
        out[name] = HierarchyWeights(name, nuc, sat, (nuc / top, sat / top) if top else (0.0, 0.0))
    return out


# ---------------------------------------------------------------------------
# salience


@dataclass
class SalienceRecord:
    node_id: int
    edu_text: str
    salience: float
    path: list[tuple[str, str | None]]


def salience(tree: DiscourseTree, params: ModelParams) -> list[SalienceRecord]:
    """Per-leaf salience in document order.

    A leaf's raw score is the mean normalized relation weight over the inner
    nodes on its path to the root; raw scores are then min-max rescaled
    across the document.  When all raw scores coincide every leaf gets 1.
    """
    _require_discourse(params)
    norms = relation_norms(params)
    rel_norms = norms[: len(RST_RELATIONS)]
    top = rel_norms.max()
    weights = rel_norms / top if top > 0 else np.zeros_like(rel_norms)
    parents = tree.parent_map()

    raw, records = [], []
    for leaf in tree.leaves():
        if leaf.edu_text is None:
            raise ExportError(f"leaf {leaf.id} has no text to export")
        path = []
        ws = []
        nid = leaf.id
        while True:
            node = tree.nodes[nid]
            path.append((node.relation.value, node.hierarchy.value if node.hierarchy else None))
            if node.children:
                ws.append(weights[node.relation.index])
            if nid == tree.root:
                break
            nid = parents[nid]
        raw.append(float(np.mean(ws)) if ws else 0.0)
        records.append(SalienceRecord(leaf.id, leaf.edu_text, 0.0, path))

    lo, hi = min(raw), max(raw)
    for rec, v in zip(records, raw):
        rec.salience = 1.0 if hi == lo else (v - lo) / (hi - lo)
    return records


def salience_color(s: float) -> str:
    """Blue (0) to red (1)."""
    s = min(max(s, 0.0), 1.0)
    return f"#{round(255 * s):02x}00{round(255 * (1 - s)):02x}"


def salience_html(docs: list[tuple[str, list[SalienceRecord]]]) -> str:
    """Self-contained HTML page, one paragraph per (doc_id, records) pair."""
    paras = []
    for doc_id, records in docs:
        spans = [
            f'<span style="color:{salience_color(r.salience)}" title="salience {r.salience:.3f}">'
            f"{html.escape(r.edu_text)}</span>"
            for r in records
        ]
        body = ' <span style="color:#888">|</span> '.join(spans)
        paras.append(f'<h3 style="font-size:small;color:#666">{html.escape(doc_id)}</h3>\n<p>{body}</p>')
    return (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>salience</title></head>\n"
        "<body style=\"font-family:serif;max-width:48em;margin:2em auto;line-height:1.6\">\n"
        + "\n".join(paras)
        + f"\n<p style=\"font-size:small;color:#666\">{html.escape(SALIENCE_METHOD)}</p>\n"
        "</body></html>\n"
    )


def inspection_report(params: ModelParams, trees: list[DiscourseTree] = ()) -> dict:
    return {
        "variant": params.variant,
        "method": SALIENCE_METHOD,
        "relation_weights": relation_weights(params).to_dict(),
        "hierarchy_weights": {k: asdict(v) for k, v in hierarchy_weights(params).items()},
        "documents": [{"doc_id": t.doc_id, "records": [asdict(r) for r in salience(t, params)]} for t in trees],
    }


def salience_export(tree: DiscourseTree, params: ModelParams, out_json: str | Path | None = None,
                    out_html: str | Path | None = None) -> list[SalienceRecord]:
    records = salience(tree, params)
    if out_json is not None:
        doc = {
            "doc_id": tree.doc_id,
            "method": SALIENCE_METHOD,
            "records": [asdict(r) for r in records],
        }
        Path(out_json).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    if out_html is not None:
        Path(out_html).write_text(salience_html([(tree.doc_id, records)]), encoding="utf-8")
    return records
