"""Regenerate the LMM protocol golden files under tests/golden/.

Only run this after an intentional change to the prompt template or the
answer grammar, and review the diff by hand.
"""

import json
from pathlib import Path

from prefdistill.errors import ParseError
from prefdistill.ranker import lmm_format_query, lmm_parse_response

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"

QUERIES = {
    "query_leaf.txt": ["Is the leaf shouting?"],
    "query_three.txt": ["Is the leaf shouting?", "Is the leaf green?", "Does the leaf have a mouth?"],
}


def parse_results() -> str:
    lines = []
    for case in json.loads((GOLDEN / "parse_cases.json").read_text()):
        try:
            lines.append(f"{case['name']} ok {lmm_parse_response(case['text'], case['n'])}")
        except ParseError as exc:
            lines.append(f"{case['name']} error {exc.index}")
    return "\n".join(lines) + "\n"


def main():
    for name, questions in QUERIES.items():
        (GOLDEN / name).write_text(lmm_format_query(questions))
    (GOLDEN / "parse_results.txt").write_text(parse_results())


if __name__ == "__main__":
    main()
