#!/usr/bin/env python3
"""Generate a small WikiSQL-format corpus for desk-scale training runs.

Writes tables.jsonl, train.jsonl, dev.jsonl, test.jsonl and lexicon.tsv.
Tables are never shared between splits. Condition values are copied
verbatim from table cells (or, for numeric comparisons, drawn from the
column range) so that annotation can find them in the question.
"""

import argparse
import json
import random
from pathlib import Path

FIRST = ["james", "maria", "lucas", "sofia", "omar", "elena", "victor", "nina", "pavel", "clara",
         "diego", "hana", "tomas", "irene", "marco", "leila", "bruno", "anya", "felix", "rosa",
         "kenji", "ines", "rafael", "greta", "samir", "olga", "hugo", "vera", "aaron", "lena"]
LAST = ["walker", "novak", "moreno", "kowalski", "haddad", "lindqvist", "okafor", "brennan", "tanaka",
        "petrov", "silva", "duarte", "keller", "romano", "hughes", "nakamura", "farrell", "ivanova",
        "castillo", "becker", "mendes", "oyelaran", "sandoval", "whitfield", "arkwright"]
CITIES = ["denver", "toledo", "fresno", "omaha", "tacoma", "raleigh", "tulsa", "boise", "reno", "akron",
          "dayton", "eugene", "laredo", "mobile", "provo", "salem", "topeka", "wichita", "yonkers", "macon"]
MASCOTS = ["hawks", "comets", "rangers", "pilots", "wolves", "herons", "miners", "giants", "storm", "falcons"]
POSITIONS = ["guard", "forward", "center", "point guard", "shooting guard"]
PARTIES = ["democratic", "republican", "independent", "green", "libertarian"]
STATES = ["ohio", "texas", "georgia", "oregon", "kansas", "utah", "maine", "nevada", "iowa", "idaho"]
RESULTS = ["re-elected", "retired", "lost renomination", "defeated"]
SYLL = ["ba", "ker", "lo", "mi", "dun", "ra", "vel", "tor", "sa", "quin", "mor", "fen", "del", "ash", "ton"]
MONTHS = ["january", "march", "april", "june", "july", "august", "october", "december"]
WORDS = ["silent", "golden", "river", "night", "broken", "summer", "paper", "distant", "crimson", "quiet",
         "winter", "glass", "hollow", "electric", "northern", "secret", "velvet", "burning", "lonely", "wild"]
NOUNS = ["road", "heart", "city", "garden", "dream", "shadow", "light", "ocean", "song", "kingdom",
         "mirror", "fire", "letter", "season", "horizon", "island", "stone", "crown", "harbor", "voice"]
CIRCUITS = ["monza", "suzuka", "interlagos", "silverstone", "imola", "spa", "sepang", "estoril", "zandvoort"]


def person(r):
    return f"{r.choice(FIRST)} {r.choice(LAST)}".title()


def title(r):
    return f"{r.choice(WORDS)} {r.choice(NOUNS)}".title()


def town(r):
    return (r.choice(SYLL) + r.choice(SYLL) + r.choice(SYLL)).title()


def date(r):
    return f"{r.randint(1, 28)} {r.choice(MONTHS).title()} {r.randint(1990, 2015)}"


# name, type, generator, role ("who" columns answer who-questions)
THEMES = {
    "basketball": [
        ("Player", "text", person, "who"),
        ("Team", "text", lambda r: f"{r.choice(CITIES)} {r.choice(MASCOTS)}".title(), None),
        ("Position", "text", lambda r: r.choice(POSITIONS).title(), None),
        ("Points", "real", lambda r: r.randint(2, 40), None),
        ("Rebounds", "real", lambda r: r.randint(0, 18), None),
        ("Season", "text", lambda r: f"{(y := r.randint(1995, 2014))}-{(y + 1) % 100:02d}", None),
    ],
    "films": [
        ("Film Name", "text", title, None),
        ("Director", "text", person, "who"),
        ("Actor", "text", person, None),
        ("Year", "real", lambda r: r.randint(1970, 2016), None),
        ("Awards", "real", lambda r: r.randint(0, 11), None),
    ],
    "elections": [
        ("District", "text", lambda r: f"{r.choice(STATES).title()} {r.randint(1, 12)}", None),
        ("Incumbent", "text", person, "who"),
        ("Party", "text", lambda r: r.choice(PARTIES).title(), None),
        ("First Elected", "real", lambda r: r.randint(1950, 2010), None),
        ("Votes", "real", lambda r: r.randint(20000, 250000), None),
        ("Result", "text", lambda r: r.choice(RESULTS).title(), None),
    ],
    "towns": [
        ("County", "text", lambda r: r.choice(["Mayo", "Galway", "Kerry", "Clare", "Sligo", "Donegal", "Cork"]), None),
        ("English Name", "text", town, None),
        ("Population", "real", lambda r: r.randint(120, 9000), None),
        ("Area", "real", lambda r: r.randint(3, 400), None),
        ("Founded", "real", lambda r: r.randint(1100, 1900), None),
    ],
    "races": [
        ("Race", "text", lambda r: f"{r.choice(STATES).title()} Grand Prix", None),
        ("Driver", "text", person, "who"),
        ("Circuit", "text", lambda r: r.choice(CIRCUITS).title(), None),
        ("Date", "text", date, None),
        ("Laps", "real", lambda r: r.randint(40, 80), None),
    ],
    "songs": [
        ("Song", "text", title, None),
        ("Artist", "text", person, "who"),
        ("Album", "text", title, None),
        ("Release Date", "text", date, None),
        ("Chart Position", "real", lambda r: r.randint(1, 100), None),
    ],
}

LEXICON = {
    "Director": ["directed by"],
    "Actor": ["star in", "starring"],
    "Population": ["how many people live in ⟨slot⟩", "population of ⟨slot⟩"],
    "Artist": ["performed by", "sung by"],
    "Driver": ["driven by"],
    "Incumbent": ["represented by"],
    "Votes": ["received"],
}

AGG_WORDS = {1: ["highest", "largest", "most"], 2: ["lowest", "smallest", "fewest"], 4: ["total"], 5: ["average"]}


def fmt(v):
    return str(v)


def make_table(r, theme, tid):
    cols = THEMES[theme]
    keep = [c for c in cols if r.random() < 0.85] or cols[:4]
    while len(keep) < 4:
        extra = [c for c in cols if c not in keep]
        keep.append(r.choice(extra))
    keep.sort(key=cols.index)
    keep = keep[:6]
    rows = []
    seen = set()
    for _ in range(r.randint(8, 14)):
        row = [c[2](r) for c in keep]
        key = tuple(str(x) for x in row)
        if key not in seen:
            seen.add(key)
            rows.append(row)
    return {
        "id": tid,
        "header": [c[0] for c in keep],
        "types": [c[1] for c in keep],
        "rows": rows,
    }, keep


def mention(r, name):
    """How a question refers to a column: its name, or sometimes a lexicon phrase."""
    lex = LEXICON.get(name)
    if lex and r.random() < 0.4:
        phrase = r.choice([p for p in lex if "⟨slot⟩" not in p] or [name.lower()])
        return phrase, True
    return name.lower(), False


def question_for(r, table, meta):
    header = table["header"]
    rows = table["rows"]
    types = table["types"]
    n = len(header)
    row = r.choice(rows)
    text_cols = [i for i in range(n) if types[i] == "text"]
    real_cols = [i for i in range(n) if types[i] == "real"]
    kind = r.choices(["eq", "eq2", "count", "agg", "cmp", "value_only", "who"], [5, 3, 2, 2, 2, 2, 2])[0]

    def pick_other(exclude):
        return r.choice([i for i in range(n) if i not in exclude])

    if kind == "who":
        who = [i for i in range(n) if meta[i][3] == "who"]
        if not who or not text_cols:
            kind = "eq"
        else:
            s = who[0]
            c = r.choice([i for i in range(n) if i != s])
            cm, _ = mention(r, header[c])
            v = fmt(row[c])
            q = r.choice([f"who has a {cm} of {v} ?", f"who had {cm} {v} ?"])
            return q, {"sel": s, "agg": 0, "conds": [[c, 0, v]]}
    if kind == "agg" and real_cols:
        s = r.choice(real_cols)
        code = r.choice(list(AGG_WORDS))
        c = pick_other({s})
        cm, _ = mention(r, header[c])
        v = fmt(row[c])
        word = r.choice(AGG_WORDS[code])
        q = f"what is the {word} {header[s].lower()} when {cm} is {v} ?"
        return q, {"sel": s, "agg": code, "conds": [[c, 0, v]]}
    if kind == "cmp" and real_cols:
        c = r.choice(real_cols)
        s = pick_other({c})
        values = sorted(x[c] for x in rows)
        op = r.choice([1, 2])
        v = fmt(r.choice(values[1:-1] or values))
        phrase = r.choice(["more than", "greater than", "over"]) if op == 1 else r.choice(["less than", "fewer than", "under"])
        q = r.choice([f"which {header[s].lower()} has {header[c].lower()} {phrase} {v} ?",
                      f"what is the {header[s].lower()} with {header[c].lower()} {phrase} {v} ?"])
        return q, {"sel": s, "agg": 0, "conds": [[c, op, v]]}
    if kind == "count":
        s = r.randrange(n)
        c = pick_other({s})
        cm, _ = mention(r, header[c])
        v = fmt(row[c])
        q = r.choice([f"how many {header[s].lower()} have {cm} {v} ?",
                      f"how many {header[s].lower()} are there with {cm} {v} ?"])
        return q, {"sel": s, "agg": 3, "conds": [[c, 0, v]]}
    if kind == "value_only" and text_cols:
        c = r.choice(text_cols)
        s = pick_other({c})
        v = fmt(row[c])
        q = r.choice([f"what is the {header[s].lower()} for {v} ?", f"name the {header[s].lower()} of {v}"])
        return q, {"sel": s, "agg": 0, "conds": [[c, 0, v]]}
    if kind == "eq2" and n >= 3:
        s = r.randrange(n)
        c1 = pick_other({s})
        c2 = pick_other({s, c1})
        m1, _ = mention(r, header[c1])
        m2, _ = mention(r, header[c2])
        v1, v2 = fmt(row[c1]), fmt(row[c2])
        q = r.choice([f"what is the {header[s].lower()} when {m1} is {v1} and {m2} is {v2} ?",
                      f"which {header[s].lower()} has a {m1} of {v1} and a {m2} of {v2} ?"])
        return q, {"sel": s, "agg": 0, "conds": [[c1, 0, v1], [c2, 0, v2]]}
    s = r.randrange(n)
    c = pick_other({s})
    cm, _ = mention(r, header[c])
    v = fmt(row[c])
    q = r.choice([f"what is the {header[s].lower()} when {cm} is {v} ?",
                  f"which {header[s].lower()} has {cm} {v} ?",
                  f"what {header[s].lower()} has a {cm} of {v} ?",
                  f"name the {header[s].lower()} with {cm} {v}"])
    return q, {"sel": s, "agg": 0, "conds": [[c, 0, v]]}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("data/synthetic"))
    ap.add_argument("--seed", type=int, default=20190101)
    ap.add_argument("--tables", type=int, nargs=3, default=[120, 30, 30], metavar=("TRAIN", "DEV", "TEST"))
    ap.add_argument("--questions-per-table", type=int, default=10)
    args = ap.parse_args()

    r = random.Random(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    themes = sorted(THEMES)
    tables = []
    splits = {}
    for split, count in zip(["train", "dev", "test"], args.tables):
        examples = []
        for k in range(count):
            theme = themes[(k + len(tables)) % len(themes)]
            tid = f"{split}-{k:04d}"
            table, meta = make_table(r, theme, tid)
            tables.append(table)
            for _ in range(args.questions_per_table):
                q, sql = question_for(r, table, meta)
                examples.append({"phase": 1, "table_id": tid, "question": q[0].upper() + q[1:], "sql": sql})
        r.shuffle(examples)
        splits[split] = examples

    with open(args.out / "tables.jsonl", "w") as f:
        for t in tables:
            f.write(json.dumps(t) + "\n")
    for split, examples in splits.items():
        with open(args.out / f"{split}.jsonl", "w") as f:
            for ex in examples:
                f.write(json.dumps(ex) + "\n")
    with open(args.out / "lexicon.tsv", "w") as f:
        f.write("# column<TAB>phrase|phrase\n")
        for col, phrases in sorted(LEXICON.items()):
            f.write(f"{col}\t{'|'.join(phrases)}\n")
    print(f"{len(tables)} tables, " + ", ".join(f"{k} {len(v)}" for k, v in splits.items()))


if __name__ == "__main__":
    main()
