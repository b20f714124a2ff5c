#!/usr/bin/env python3
"""Builds the 500-document filter fixture corpus.

Writes docs.jsonl (plus one line of invalid UTF-8 and one malformed line)
and <dir>.expected.jsonl with the verdict each document was authored to get.
"""
import json
import random
import sys

WORDS = ["river", "garden", "window", "market", "station", "winter", "signal",
         "paper", "orange", "bridge", "letter", "engine", "silver", "forest"]
HANZI = "的一是在不了有和人这中大为上个国我以要他时来用们生到作地于出就分对成会可主发年动同工也能下过子说产种面而方后多定行学法所民得经十三之进着等部度家电力里如水化高自二理起小物现实加量都两体制机当使点从业本去把性好应开它合还因由其些然前外天政四日那社义事平形相全表间样与关各重新线内数正心反你明看原又么利比或但质气第向道命此变条只没结解问意建月公无系军很情者最立代想已通并提直题党程展五果料象员革位入常文总次品式活设及管特件长求老头基资边流路级少图山统接知较将组见计别她手角期根论运农指几九区强放决西被干做必战先回则任取据处队南给色光门即保治北造百规热领七海口东导器压志世金增争济阶油思术极交受联什认六共权收证改清己美再采转更单风切打白教速花带安场身车例真务具万每目至达走积示议声报斗完类八离华名确才科张信马节话米整空元况今集温传土许步群广石记需段研界拉林律叫且究观越织装影算低持音众书布复容儿须际商非验连断深难近矿千周委素技备半办青省列习响约支般史感劳便团往酸历市克何除消构府称太准精值号率族维划选标写存候毛亲快效斯院查江型眼王按格养易置派层片始却专状育厂京识适属圆包火住调满县局照参红细引听该铁价严龙飞"


def lang_filler(n_tokens, rng):
    """Text with exactly n_tokens English words + hanzi, punctuated often."""
    parts = []
    for i in range(n_tokens):
        if rng.random() < 0.5:
            parts.append(rng.choice(WORDS))
        else:
            parts.append(rng.choice(HANZI))
    return ", ".join(parts) + "."


def pad_to(text, min_len):
    # Digits are neither words nor hanzi nor punctuation.
    while len(text) < min_len:
        text += " 7."
    return text


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "data/fixtures/filter_corpus"
    rng = random.Random(20240521)
    terms = ["lewdword", "smutterm", "xrated", "obscenephrase", "色情词"]
    docs = []

    def add(text, verdict, source="chinese_internet"):
        docs.append({"id": f"doc{len(docs):04d}", "source": source, "text": text, "expect": verdict})

    # Boundaries.
    add(pad_to(lang_filler(19, rng), 60), "lang_count")
    add(pad_to(lang_filler(20, rng), 60), None)
    base = pad_to(lang_filler(30, rng), 80)
    add(base + " " + " ".join(terms[:3]) + ".", None)
    add(base + " " + " ".join(terms[:4]) + ".", "nsfw")
    add(base + " lewdword lewdword lewdword.", None)
    add(base + " LewdWord, lewdword; LEWDWORD lewdword.", "nsfw")
    add(base + " lewdwords notlewdword lewdwordy xlewdword.", None)
    add("short text", "too_short")
    add("a" * 49, "too_short")
    add("word," * 20 + "x" * 2048 + ".", None)
    add("word," * 20 + "x" * 2049 + ".", "punctuation_run")
    add("1234567890. " * 10, "lang_count")

    sources = ["chinese_internet", "wikipedia", "the_pile", "github", "clcf", "business_reports", "ulcf", "lccc"]
    while len(docs) < 500:
        kind = rng.choice(["keep", "keep", "keep", "short", "lang", "nsfw", "run"])
        src = rng.choice(sources)
        if kind == "keep":
            text = pad_to(lang_filler(rng.randint(20, 80), rng), 50)
            n = rng.randint(0, 3)
            if n:
                text += " " + " ".join(rng.choice(terms) for _ in range(n)) + "."
            add(text, None, src)
        elif kind == "short":
            add(lang_filler(rng.randint(1, 5), rng)[:rng.randint(1, 49)], "too_short", src)
        elif kind == "lang":
            add(pad_to(lang_filler(rng.randint(1, 19), rng), 50), "lang_count", src)
        elif kind == "nsfw":
            text = pad_to(lang_filler(rng.randint(20, 60), rng), 50)
            text += " " + " ".join(rng.choice(terms) for _ in range(rng.randint(4, 8))) + "."
            add(text, "nsfw", src)
        else:
            add(lang_filler(25, rng) + " " + "z" * rng.randint(2049, 3000), "punctuation_run", src)

    with open(f"{out_dir}/docs.jsonl", "wb") as f:
        for d in docs:
            line = json.dumps({"id": d["id"], "source": d["source"], "text": d["text"]}, ensure_ascii=False)
            f.write(line.encode("utf-8") + b"\n")
        f.write(b'{"id": "bad0", "source": "wikipedia", "text": "\xff\xfe broken"}\n')
        f.write(b'{"id": "bad1", "text": \n')
    with open(f"{out_dir}.expected.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for d in docs:
            f.write(json.dumps({"id": d["id"], "verdict": d["expect"]}) + "\n")
    kept = sum(1 for d in docs if d["expect"] is None)
    print(f"{len(docs)} docs, {kept} kept, {len(docs) - kept} rejected")


if __name__ == "__main__":
    main()
