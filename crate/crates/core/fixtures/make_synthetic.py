"""Regenerates fixtures/synthetic: 300 tweets whose label is fixed by the
category of the one labelling MWE they contain.

Tweet i carries labelling MWE i % 10. The first five sit in VerbalIdiom or
FullVerbParticle and make the tweet hateful; the rest (Discourse, Adverb,
Nominal) make it non-hateful. Every third tweet also opens with the
Determiner "a lot", which therefore occurs in both classes. Fillers never
share a lemma with the lexicon.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent / "synthetic"

LABELLING = [
    ("give a crap", "VerbalIdiom"),
    ("go to hell", "VerbalIdiom"),
    ("get out", "FullVerbParticle"),
    ("shut up", "FullVerbParticle"),
    ("piss off", "FullVerbParticle"),
    ("thank you", "Discourse"),
    ("of course", "Discourse"),
    ("once again", "Adverb"),
    ("tax payer", "Nominal"),
    ("high school", "Nominal"),
]
EXTRA = [
    ("a lot", "Determiner"),
    ("look forward to", "InherentlyAdpositionalVerb"),
    ("kind of", "Adverb"),
]
FILLERS = (
    "today weather city people really morning coffee game music street friend "
    "work train book phone movie dinner idea garden river window paper table "
    "market season picture letter summer winter bridge"
).split()


def tweet_text(i, rng):
    phrase, _ = LABELLING[i % 10]
    words = phrase.split()
    if (i // 10) % 4 == 1:
        words = words[:1] + [rng.choice(FILLERS)] + words[1:]
    if i % 5 == 0:
        words[0] = words[0].capitalize()
    body = [rng.choice(FILLERS) for _ in range(2)] + words + [rng.choice(FILLERS)]
    if i % 3 == 0:
        body = ["a", "lot"] + body
    if i % 4 == 0:
        body[-1] += "!"
    if i % 7 == 0:
        body = ["@user%d" % (i % 5)] + body
    if i % 11 == 0:
        body.append("#topic")
    if i % 13 == 0:
        body.append("https://example.org/%d" % i)
    return " ".join(body)


def main():
    rng = random.Random(20240601)
    OUT.mkdir(exist_ok=True)
    with open(OUT / "lexicon.tsv", "w") as f:
        for phrase, category in LABELLING + EXTRA:
            f.write("%s\t%s\n" % (phrase, category))
    with open(OUT / "corpus.jsonl", "w") as f:
        for i in range(300):
            label = "hateful" if i % 10 < 5 else "nonhateful"
            record = {"id": "s%03d" % i, "text": tweet_text(i, rng), "label": label}
            f.write(json.dumps(record) + "\n")


if __name__ == "__main__":
    main()
