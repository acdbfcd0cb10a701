"""Writes the tokenizer golden file from an independent regex tokenizer."""
import json
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "tests" / "fixtures"

TOKEN = re.compile(r"[^\W_]+(?:-[^\W_]+)*|[^\w\s]|_")

EXTRA = [
    "I want Indian food.",
    "mid-priced?",
    "",
    "   ",
    "Is it in the north-east part of town?",
    "i don't care",
    "what's the post code, please!",
    "I'd like a MODERATELY priced restaurant -- anywhere.",
    "price-range: cheap; area: centre",
    "phone number (and address)?",
    "x-",
    "-x",
    "a--b",
    "the 3-star place at 12:30",
    "snake_case_token",
]


def tokenize(text):
    return TOKEN.findall(text.lower())


def main():
    train = json.loads((FIXTURES / "woz" / "woz_train_en.json").read_text())
    seen, sample = set(), []
    for d in train:
        for t in d["dialogue"]:
            for text in (t["transcript"], t["system_transcript"]):
                if text and text not in seen:
                    seen.add(text)
                    sample.append(text)
    sample = EXTRA + sample[: 50 - len(EXTRA)]
    golden = [{"text": s, "tokens": tokenize(s)} for s in sample]
    (FIXTURES / "tokenize_golden.json").write_text(json.dumps(golden, indent=1) + "\n")


if __name__ == "__main__":
    main()
