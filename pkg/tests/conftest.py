from __future__ import annotations

from pathlib import Path

import pytest

from explbench.corpus import CorpusConfig, parse_knowledge_base, parse_questions

KINDOF_TSV = """\
UID\tHYPO\tLINK\tHYPER
K1\twater\tis a kind of\tliquid
K2\tliquid\tis a kind of\tmatter
K3\tice\tis a kind of\tsolid
K4\tsolid\tis a kind of\tmatter
K5\tcopper\tis a kind of\tmetal
"""

PROPERTY_TSV = """\
UID\tSUBJ\tPROP
P1\tmetal\tconducts electricity
P2\tice\tis cold
P3\twater\tis wet
P4\tmatter\thas mass
"""

SYNONYMY_TSV = """\
UID\tA\tLINK\tB
S1\tcold\tmeans\tchilly
S2\tbike\tmeans\tbicycle
S3\tcooler\tmeans\tcolder
"""

QUESTIONS_JSONL = """\
{"id": "Q1", "stem": "Which of these is matter?", "choices": ["water", "heat", "light", "sound"], "answer_key": 0, "gold": [{"fact": "K1", "role": "CENTRAL"}, {"fact": "K2", "role": "GROUNDING"}], "split": "dev"}
{"id": "Q2", "stem": "Why does a copper wire carry current?", "choices": ["it is cold", "it conducts", "it melts", "it floats"], "answer_key": 1, "gold": [{"fact": "K5", "role": "CENTRAL"}, {"fact": "P1", "role": "CENTRAL"}], "split": "dev"}
"""


def write_kb_dir(root: Path) -> Path:
    kb_dir = root / "kb"
    kb_dir.mkdir(parents=True, exist_ok=True)
    (kb_dir / "KINDOF.tsv").write_text(KINDOF_TSV, encoding="utf-8")
    (kb_dir / "PROPERTY.tsv").write_text(PROPERTY_TSV, encoding="utf-8")
    (kb_dir / "SYNONYMY.tsv").write_text(SYNONYMY_TSV, encoding="utf-8")
    return kb_dir


@pytest.fixture
def kb_dir(tmp_path: Path) -> Path:
    return write_kb_dir(tmp_path)


@pytest.fixture
def kb(kb_dir: Path):
    return parse_knowledge_base(kb_dir, CorpusConfig())


@pytest.fixture
def questions(kb, tmp_path: Path):
    path = tmp_path / "questions.jsonl"
    path.write_text(QUESTIONS_JSONL, encoding="utf-8")
    return parse_questions(path, kb)


@pytest.fixture
def fixture_root() -> Path:
    return Path(__file__).resolve().parent.parent / "fixtures"
