#!/usr/bin/env python
"""Generate a synthetic PDF corpus with planted facts for CLI runs.

Writes the PDFs plus ``manifest.json`` (ground truth) and
``keyword_rules.tsv`` (mock-backend keyword table) into the target
directory, then prints the matching pipeline invocation.

Example:
    python scripts/make_corpus.py /tmp/corpus --docs 25
    evidencepipe run --corpus /tmp/corpus --out /tmp/out \
        --keyword-table /tmp/corpus/keyword_rules.tsv
"""

from __future__ import annotations

import argparse
from pathlib import Path

from evidencepipe.schema import load_schema_set
from evidencepipe.simharness import generate_corpus, paper_shape_spec, synthetic_spec


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("corpus_dir", type=Path)
    parser.add_argument("--docs", type=int, default=25,
                        help="number of documents (ignored with --paper-shape)")
    parser.add_argument("--pages", type=int, default=8)
    parser.add_argument("--captions", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--schema", default="doac.v1")
    parser.add_argument("--paper-shape", action="store_true",
                        help="generate the full 734-document reference shape")
    args = parser.parse_args()

    schema_set = load_schema_set(args.schema)
    if args.paper_shape:
        spec = paper_shape_spec(args.seed)
    else:
        spec = synthetic_spec(
            [{"count": args.docs, "pages": args.pages,
              "captions": args.captions, "plants": True}],
            seed=args.seed,
        )
    manifest = generate_corpus(spec, args.corpus_dir, schema_set)
    print(f"wrote {len(manifest.docs)} documents "
          f"({manifest.total_pages} pages, {manifest.total_captions} captions) "
          f"to {args.corpus_dir}")
    print(f"keyword table: {args.corpus_dir / 'keyword_rules.tsv'}")
    print("run with:")
    print(f"  evidencepipe run --corpus {args.corpus_dir} --out {args.corpus_dir}-out"
          f" --keyword-table {args.corpus_dir / 'keyword_rules.tsv'} --seed {args.seed}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
