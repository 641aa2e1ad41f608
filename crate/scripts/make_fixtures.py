#!/usr/bin/env python3
"""Regenerates the small offline fixtures under fixtures/.

Output is a pure function of SEED, so rerunning leaves the files unchanged.
"""
import json
import random
from pathlib import Path

SEED = 20240611
OUT = Path(__file__).resolve().parent.parent / "fixtures"

TOPICS = {
    "music": {
        "nouns": ["guitar", "singer", "concert", "band", "drummer", "song", "album", "stage", "piano", "audience"],
        "verbs": ["plays", "performs", "records", "sings", "tunes", "rehearses"],
        "adjs": ["loud", "famous", "acoustic", "young", "talented", "jazz"],
    },
    "sports": {
        "nouns": ["player", "football", "stadium", "coach", "team", "match", "goal", "runner", "tennis", "referee"],
        "verbs": ["kicks", "wins", "trains", "scores", "throws", "races"],
        "adjs": ["fast", "tired", "strong", "winning", "professional", "local"],
    },
    "cooking": {
        "nouns": ["chef", "kitchen", "soup", "bread", "oven", "recipe", "pasta", "garlic", "dinner", "restaurant"],
        "verbs": ["cooks", "bakes", "stirs", "serves", "tastes", "chops"],
        "adjs": ["hot", "fresh", "spicy", "delicious", "homemade", "italian"],
    },
    "weather": {
        "nouns": ["storm", "rain", "snow", "wind", "cloud", "forecast", "temperature", "sky", "flood", "sunshine"],
        "verbs": ["falls", "blows", "covers", "hits", "clears", "drops"],
        "adjs": ["cold", "heavy", "cloudy", "freezing", "sunny", "humid"],
    },
    "travel": {
        "nouns": ["tourist", "airport", "train", "hotel", "beach", "passport", "museum", "flight", "city", "map"],
        "verbs": ["visits", "books", "explores", "boards", "leaves", "reaches"],
        "adjs": ["crowded", "ancient", "small", "busy", "foreign", "coastal"],
    },
    "finance": {
        "nouns": ["bank", "loan", "market", "investor", "stock", "price", "budget", "tax", "salary", "economy"],
        "verbs": ["rises", "falls", "lends", "invests", "pays", "grows"],
        "adjs": ["global", "annual", "rising", "low", "public", "private"],
    },
}
FILLERS = ["the", "a", "in", "on", "with", "near", "at", "of", "and", "today"]


def sentence(rng, topic, length):
    t = TOPICS[topic]
    words = [rng.choice(FILLERS), rng.choice(t["adjs"]), rng.choice(t["nouns"]), rng.choice(t["verbs"])]
    while len(words) < length:
        pool = rng.choice(["nouns", "nouns", "adjs", "verbs", "filler"])
        words.append(rng.choice(FILLERS) if pool == "filler" else rng.choice(t[pool]))
    return " ".join(words)


def pairs(rng):
    relations = ["entailment"] * 4 + ["neutral"] * 3 + ["duplicate"] * 2 + ["caption"] + ["contradiction"] * 2
    topics = sorted(TOPICS)
    out = []
    for i in range(1000):
        topic = rng.choice(topics)
        rel = rng.choice(relations)
        a = sentence(rng, topic, rng.randint(5, 12))
        other = rng.choice(topics) if rel == "contradiction" else topic
        b = sentence(rng, other, rng.randint(5, 12))
        if i % 97 == 13:
            b = a  # identical texts: every keyword overlaps the source
        out.append(json.dumps({"text_a": a, "text_b": b, "relation": rel}))
    # records the ingester must reject and count
    out.insert(250, json.dumps({"text_a": "a b", "text_b": "c d", "relation": "banana"}))
    out.insert(600, '{"text_a": "broken record"')
    return out


def documents(rng):
    topics = sorted(TOPICS)
    docs = []
    for i in range(20):
        topic = topics[i % len(topics)]
        body = ". ".join(sentence(rng, topic, rng.randint(6, 10)) for _ in range(rng.randint(2, 4)))
        docs.append({"id": f"doc{i:02d}", "text": body, "topic": topic})
    return docs


def retrieval(rng, docs):
    queries = [
        ("q1", "guitar concert"),
        ("q2", "football match goal"),
        ("q3", "spicy soup recipe"),
        ("q4", "heavy storm forecast"),
        ("q5", "cheap hotel near the beach"),
        ("q6", "bank loan"),
        ("q7", "famous singer album"),
        ("q8", "stock market economy"),
    ]
    topic_of = {"q1": "music", "q2": "sports", "q3": "cooking", "q4": "weather", "q5": "travel", "q6": "finance",
                "q7": "music", "q8": "finance"}
    qrels = []
    for qid, _ in queries:
        for d in docs:
            rel = 1 if d["topic"] == topic_of[qid] else 0
            if rel or rng.random() < 0.2:
                qrels.append(f"{qid} 0 {d['id']} {rel}")
    return queries, qrels


def preselection(rng):
    topics = sorted(TOPICS)
    sets = []
    for i in range(12):
        topic = topics[i % len(topics)]
        question = "what " + sentence(rng, topic, rng.randint(4, 6)) + " ?"
        n = rng.randint(3, 14)
        cands = []
        for j in range(n):
            on_topic = rng.random() < 0.3
            cands.append({"text": sentence(rng, topic if on_topic else rng.choice(topics), rng.randint(5, 9)),
                          "label": int(on_topic and rng.random() < 0.7)})
        sets.append(json.dumps({"question": question, "candidates": cands}))
    return sets


def classification(rng):
    topics = ["cooking", "music", "sports", "weather"]
    rows = lambda n: [f"{t}\t{sentence(rng, t, rng.randint(4, 8))}" for t in topics for _ in range(n)]
    train, test = rows(15), rows(5)
    rng.shuffle(train)
    rng.shuffle(test)
    return train, test


def main():
    rng = random.Random(SEED)
    OUT.mkdir(exist_ok=True)
    (OUT / "pairs.jsonl").write_text("\n".join(pairs(rng)) + "\n")
    docs = documents(rng)
    (OUT / "docs.jsonl").write_text("".join(json.dumps({"id": d["id"], "text": d["text"]}) + "\n" for d in docs))
    queries, qrels = retrieval(rng, docs)
    (OUT / "queries.tsv").write_text("".join(f"{q}\t{t}\n" for q, t in queries))
    (OUT / "qrels.txt").write_text("\n".join(qrels) + "\n")
    (OUT / "preselect.jsonl").write_text("\n".join(preselection(rng)) + "\n")
    train, test = classification(rng)
    (OUT / "classify_train.tsv").write_text("\n".join(train) + "\n")
    (OUT / "classify_test.tsv").write_text("\n".join(test) + "\n")


if __name__ == "__main__":
    main()
