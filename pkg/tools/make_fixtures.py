#!/usr/bin/env python3
"""Regenerate the shipped fixture corpus (deterministic, seeded).

Produces under fixtures/: a 200-fact / 10-table knowledge base, 20 questions
with gold explanations, two full score files, two-rater relevance ratings
over the k=20 shortlists, generated-text outputs, 10 schemas, and a config
file wiring them together.  Run from the repository root:

    python tools/make_fixtures.py
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from explbench.corpus import CorpusConfig, parse_knowledge_base, parse_questions  # noqa: E402
from explbench.schema_engine import parse_schema_text, solve  # noqa: E402
from explbench.shortlist import build_shortlist  # noqa: E402
from explbench.corpus import parse_score_file  # noqa: E402

SEED = 20240501

GROUPS = {
    "metal": ("material", ["copper", "iron", "aluminum", "silver"], "conducts electricity"),
    "liquid": ("matter", ["water", "milk", "oil", "juice"], "takes the shape of its container"),
    "gas": ("matter", ["oxygen", "helium", "steam", "nitrogen"], "fills its container"),
    "mammal": ("animal", ["dog", "cat", "whale", "horse"], "has fur or hair"),
    "bird": ("animal", ["eagle", "robin", "penguin", "owl"], "has feathers"),
    "fish": ("animal", ["salmon", "trout", "shark", "cod"], "has gills"),
    "planet": ("celestial object", ["mars", "venus", "jupiter", "mercury"], "orbits the sun"),
    "tool": ("object", ["hammer", "saw", "drill", "wrench"], "has a handle"),
    "energy": ("phenomenon", ["heat", "light", "sound", "electricity"], "can be transferred"),
    "plant": ("organism", ["fern", "oak", "moss", "cactus"], "makes its own food"),
}

PARTS = {
    "dog": "a tail", "cat": "whiskers", "whale": "a blowhole", "horse": "hooves",
    "eagle": "talons", "robin": "a beak", "penguin": "flippers", "owl": "wings",
    "salmon": "fins", "trout": "scales", "shark": "teeth", "cod": "gills",
    "hammer": "a handle", "saw": "a blade", "drill": "a bit", "wrench": "a jaw",
    "oak": "leaves", "fern": "fronds", "cactus": "spines", "moss": "rhizoids",
    "mars": "two moons", "jupiter": "a red spot", "venus": "a thick atmosphere",
    "mercury": "a cratered surface",
}

USEDFOR = {
    "hammer": "pounding nails", "saw": "cutting wood", "drill": "making holes",
    "wrench": "turning bolts", "copper": "making wire", "iron": "making beams",
    "aluminum": "making cans", "silver": "making jewelry", "water": "drinking",
    "oil": "lubricating machines", "light": "seeing in the dark", "heat": "cooking food",
    "oxygen": "breathing", "milk": "feeding young", "juice": "drinking", "helium": "filling balloons",
}

MADEOF = {
    "wire": "copper", "beam": "iron", "can": "aluminum", "ring": "silver",
    "ice": "water", "cheese": "milk", "soap": "oil", "nail": "iron",
    "pan": "iron", "kettle": "aluminum", "coin": "silver", "mirror": "silver",
    "cloud": "water", "foil": "aluminum", "pipe": "copper", "magnet": "iron",
}

CAUSE_CHAINS = [
    ("friction", "heat", "melting"),
    ("heat", "evaporation", "clouds"),
    ("rain", "erosion", "canyons"),
    ("wind", "waves", "beach erosion"),
    ("sunlight", "warming", "temperature rise"),
    ("pollution", "acid rain", "damaged forests"),
    ("earthquakes", "tsunamis", "flooding"),
    ("gravity", "tides", "tidal currents"),
    ("pressure", "compression", "metamorphic rock"),
    ("burning fuel", "smoke", "haze"),
]

FOUNDIN = {
    "salmon": "rivers", "trout": "streams", "shark": "oceans", "cod": "cold seas",
    "penguin": "antarctica", "eagle": "mountains", "owl": "forests", "robin": "gardens",
    "fern": "shady forests", "moss": "damp rocks", "cactus": "deserts", "oak": "woodlands",
    "copper": "ore deposits", "iron": "the earth's crust", "helium": "natural gas wells",
    "oxygen": "the atmosphere", "water": "oceans", "whale": "oceans", "dog": "homes",
    "horse": "grasslands",
}

REQUIRES = {
    "photosynthesis": "sunlight", "respiration": "oxygen", "evaporation": "heat",
    "condensation": "cooling", "rusting": "moisture", "burning": "fuel",
    "growth": "nutrients", "flight": "lift", "swimming": "water", "digestion": "enzymes",
    "melting": "heat", "freezing": "cold", "boiling": "heat", "germination": "water",
    "erosion": "moving water", "weathering": "exposure",
}

ACTIONS = [
    ("plants", "perform", "photosynthesis"), ("animals", "perform", "respiration"),
    ("mammals", "perform", "respiration"), ("fish", "perform", "swimming"),
    ("birds", "perform", "flight"), ("puddles", "undergo", "evaporation"),
    ("clouds", "undergo", "condensation"), ("iron objects", "undergo", "rusting"),
    ("candles", "undergo", "burning"), ("seedlings", "undergo", "growth"),
    ("glaciers", "undergo", "melting"), ("ponds", "undergo", "freezing"),
    ("people", "perform", "digestion"), ("snakes", "undergo", "growth"),
    ("stoves", "cause", "melting"), ("refrigerators", "cause", "freezing"),
    ("lungs", "perform", "respiration"), ("leaves", "perform", "photosynthesis"),
]

SYNONYMS = [
    ("cooler", "colder"), ("bike", "bicycle"), ("quick", "fast"), ("big", "large"),
    ("tiny", "small"), ("damp", "moist"), ("shine", "glow"), ("spin", "rotate"),
    ("push", "shove"), ("seal", "close"),
]


def build_tables():
    tables: dict[str, tuple[list[str], list[list[str]]]] = {}

    kindof = []
    for group, (parent, members, _) in GROUPS.items():
        for member in members:
            kindof.append([member, "is a kind of", group])
        kindof.append([group, "is a kind of", parent])
    tables["KINDOF"] = (["HYPO", "LINK", "HYPER"], kindof)  # 50 rows

    tables["PROPERTYOF"] = (
        ["CLASS", "LINK", "PROP"],
        [[group, "usually", prop] for group, (_, _, prop) in GROUPS.items()],
    )  # 10 rows

    tables["HASPART"] = (
        ["WHOLE", "LINK", "PART"],
        [[whole, "has", part] for whole, part in PARTS.items()],
    )  # 24 rows

    tables["USEDFOR"] = (
        ["OBJ", "LINK", "PURPOSE"],
        [[obj, "is used for", purpose] for obj, purpose in USEDFOR.items()],
    )  # 16 rows

    tables["MADEOF"] = (
        ["OBJ", "LINK", "MATERIAL"],
        [[f"a {obj}", "is made of", material] for obj, material in MADEOF.items()],
    )  # 16 rows

    causes = []
    for a, b, c in CAUSE_CHAINS:
        causes.append([a, "causes", b])
        causes.append([b, "causes", c])
    tables["CAUSES"] = (["CAUSE", "LINK", "EFFECT"], causes)  # 20 rows

    tables["FOUNDIN"] = (
        ["THING", "LINK", "PLACE"],
        [[thing, "is found in", place] for thing, place in FOUNDIN.items()],
    )  # 20 rows

    tables["REQUIRES"] = (
        ["PROCESS", "LINK", "INPUT"],
        [[process, "requires", inp] for process, inp in REQUIRES.items()],
    )  # 12 rows

    tables["ACTION"] = (["AGENT", "VERB", "OBJECT"], [list(row) for row in ACTIONS])  # 18 rows

    tables["SYNONYMY"] = (
        ["A", "LINK", "B"],
        [[a, "means", b] for a, b in SYNONYMS],
    )  # 10 rows

    return tables


def write_kb(tables, kb_dir: Path) -> dict[tuple[str, str], str]:
    """Write TSVs; return (table, first cell value + last) -> uid lookup."""
    kb_dir.mkdir(parents=True, exist_ok=True)
    uid_of: dict[tuple[str, str], str] = {}
    for table, (columns, rows) in tables.items():
        lines = ["\t".join(["UID"] + columns)]
        prefix = table[0] + table[-1]
        for i, row in enumerate(rows):
            uid = f"{prefix}{i:03d}"
            uid_of[(table, row[0] + "|" + row[-1])] = uid
            lines.append("\t".join([uid] + row))
        (kb_dir / f"{table}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return uid_of


def build_questions(uid_of):
    questions = []
    group_names = list(GROUPS)
    entities = [(g, m) for g, (_, members, _) in GROUPS.items() for m in members]
    splits = ["train"] * 10 + ["dev"] * 4 + ["test"] * 6
    for i in range(20):
        group, member = entities[i * 2]
        parent, _, prop = GROUPS[group]
        gold = [
            {"fact": uid_of[("KINDOF", f"{member}|{group}")], "role": "CENTRAL"},
            {"fact": uid_of[("KINDOF", f"{group}|{parent}")], "role": "GROUNDING"},
            {"fact": uid_of[("PROPERTYOF", f"{group}|{prop}")], "role": "CENTRAL"},
        ]
        if member in PARTS:
            gold.append({"fact": uid_of[("HASPART", f"{member}|{PARTS[member]}")], "role": "LEXGLUE"})
        if member in FOUNDIN:
            gold.append({"fact": uid_of[("FOUNDIN", f"{member}|{FOUNDIN[member]}")], "role": "LEXGLUE"})
        wrong = [g for g in group_names if g != group][:3]
        choices = [group] + wrong
        questions.append(
            {
                "id": f"Q{i:02d}",
                "stem": f"A {member} {prop}. Which category does the {member} belong to?",
                "choices": choices,
                "answer_key": 0,
                "gold": gold,
                "split": splits[i],
            }
        )
    return questions


def write_scores(questions, kb, out_dir: Path, rng: random.Random):
    out_dir.mkdir(parents=True, exist_ok=True)
    fact_ids = sorted(kb.facts)
    gold_by_q = {q["id"]: {g["fact"] for g in q["gold"]} for q in questions}
    for ranker, gold_boost, syn_boost in (("ranker_a", 2.5, 2.0), ("ranker_b", 2.2, 0.0)):
        lines = []
        for q in questions:
            qid = q["id"]
            stem_tokens = set(q["stem"].lower().split())
            for fact_id in fact_ids:
                fact = kb.facts[fact_id]
                score = rng.gauss(0.0, 0.8)
                if fact_id in gold_by_q[qid]:
                    score += gold_boost + rng.random()
                elif stem_tokens & set(fact.text.lower().split()):
                    score += 1.0
                if fact.is_synonymy:
                    score += syn_boost  # ranker_a overrates thesaurus facts
                lines.append(f"{qid}\t{fact_id}\t{score:.4f}")
        (out_dir / f"{ranker}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_ratings(questions, kb, scores_dir: Path, path: Path, rng: random.Random):
    score_files = [
        parse_score_file(scores_dir / "ranker_a.tsv"),
        parse_score_file(scores_dir / "ranker_b.tsv"),
    ]
    q_objs = {q["id"]: q for q in questions}
    records = []
    minute = 0
    for i, qid in enumerate(sorted(q_objs)):
        q = q_objs[qid]
        from explbench.corpus import Question

        question = Question(
            id=qid,
            stem=q["stem"],
            choices=tuple(q["choices"]),
            correct_choice=q["answer_key"],
            gold_explanation=tuple((g["fact"], g["role"]) for g in q["gold"]),
            split=q["split"],
        )
        sl = build_shortlist(question, score_files, 20, kb)
        gold = question.gold_set
        raters = ["alice"] if i % 7 == 3 else ["alice", "bob"]  # some single-rated
        for fact_id in sl.fact_ids:
            fact = kb.facts[fact_id]
            if fact_id in gold:
                true_grade = 3 if rng.random() < 0.6 else 2
            elif set(fact.text.split()) & set(question.stem.lower().split()):
                true_grade = rng.choice([1, 1, 2])
            else:
                true_grade = rng.choice([0, 0, 0, 1])
            for rater in raters:
                grade = true_grade
                if rater == "bob" and rng.random() < 0.3:
                    grade = min(3, max(0, grade + rng.choice([-1, 1])))
                records.append(
                    {
                        "question": qid,
                        "fact": fact_id,
                        "rater": rater,
                        "rating": grade,
                        "ts": f"2024-05-01T10:{minute % 60:02d}:00",
                    }
                )
                minute += 1
    path.write_text(
        "\n".join(json.dumps(r, ensure_ascii=False) for r in records) + "\n", encoding="utf-8"
    )


def write_generated(questions, kb, path: Path, rng: random.Random):
    lines = []
    for q in questions[:10]:
        gold_ids = [g["fact"] for g in q["gold"]]
        picked = gold_ids[: rng.randint(1, 3)]
        pieces = [kb.facts[fid].text for fid in picked]
        # a near-miss paraphrase plus pure noise, to exercise the threshold
        pieces.append(kb.facts[gold_ids[0]].text.replace("is a kind of", "is one sort of thing like"))
        pieces.append("the quizzical zephyr jumbles vexed gnomes")
        lines.append(json.dumps({"question": q["id"], "raw": " [AND] ".join(pieces)}))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


SCHEMAS = """\
# fixture inference patterns over the toy knowledge base

schema taxonomy-chain
slot KINDOF HYPO=$a HYPER=$b
slot KINDOF HYPO=$b HYPER=$c

schema kind-with-property
slot KINDOF HYPO=$x HYPER=$g
slot PROPERTYOF CLASS=$g

schema part-of-kind
slot KINDOF HYPO=$x HYPER=$g
slot HASPART WHOLE=$x

schema made-and-used
slot MADEOF MATERIAL=$m
slot USEDFOR OBJ=$m

schema metal-things
slot KINDOF HYPO=$x HYPER="metal"
slot MADEOF MATERIAL=$x

schema cause-chain
slot CAUSES CAUSE=$a EFFECT=$b
slot CAUSES CAUSE=$b EFFECT=$c

schema habitat-of-kind
slot KINDOF HYPO=$x HYPER=$g
slot FOUNDIN THING=$x

schema process-needs
slot ACTION OBJECT=$p
slot REQUIRES PROCESS=$p

schema mammal-part
slot KINDOF HYPO=$x HYPER="mammal"
slot HASPART WHOLE=$x

schema class-properties
slot PROPERTYOF
"""

CONFIG = """\
# fixture pipeline configuration; paths are relative to the repo root
kb_dir = fixtures/kb
questions = fixtures/questions.jsonl
scores = fixtures/scores/ranker_a.tsv, fixtures/scores/ranker_b.tsv
ratings = fixtures/ratings.jsonl
generated = fixtures/generated.jsonl
schemas = fixtures/schemas.schema
out_dir = out
shortlist_k = 20
top_k = 8
rouge_threshold = 0.70
clip_threshold = 0.0
filter_threshold = 0.0
n_schemas = 3
gold_setting = tr2
aggregation = per-question
raters = alice:token-a,bob:token-b
coverage = 2
state_dir = state
"""


def main() -> None:
    rng = random.Random(SEED)
    fixtures = ROOT / "fixtures"
    tables = build_tables()
    total_rows = sum(len(rows) for _, rows in tables.values())
    assert total_rows == 200, f"expected 200 facts, got {total_rows}"

    uid_of = write_kb(tables, fixtures / "kb")
    kb = parse_knowledge_base(fixtures / "kb", CorpusConfig())
    assert len(kb) == total_rows

    questions = build_questions(uid_of)
    (fixtures / "questions.jsonl").write_text(
        "\n".join(json.dumps(q, ensure_ascii=False) for q in questions) + "\n", encoding="utf-8"
    )
    parsed = parse_questions(fixtures / "questions.jsonl", kb)
    assert len(parsed) == 20

    write_scores(questions, kb, fixtures / "scores", rng)
    write_ratings(questions, kb, fixtures / "scores", fixtures / "ratings.jsonl", rng)
    write_generated(questions, kb, fixtures / "generated.jsonl", rng)

    (fixtures / "schemas.schema").write_text(SCHEMAS, encoding="utf-8")
    schemas = parse_schema_text(SCHEMAS)
    assert len(schemas) == 10
    for schema in schemas:
        solutions = solve(schema, kb)
        assert solutions, f"schema {schema.name} has no solutions"

    (fixtures / "explbench.conf").write_text(CONFIG, encoding="utf-8")
    print(f"fixtures written to {fixtures} ({total_rows} facts, {len(parsed)} questions)")


if __name__ == "__main__":
    main()
