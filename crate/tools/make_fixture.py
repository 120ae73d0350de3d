#!/usr/bin/env python3
"""Generate the bundled 200-document pipeline fixture.

Deterministic (fixed seed). The mix exercises every pipeline stage:
clean prose in five languages, code and math documents, junk that the
quality filter drops, exact duplicates, near-duplicates (one sentence
deleted), and documents with normalization dirt.
"""
import json
import random

random.seed(20240517)

POOLS = {
    "sv": ("och det som huset katten vinter sjunga skogen berget vatten "
           "springa läsa skriva tala vandra handla tycka mycket gammal "
           "stark vacker snabb långsam rolig varje kväll morgon dag natt "
           "är för med").split(),
    "da": ("og det den huset katten vinter synge skoven bjerget vandet "
           "løbe læse skrive tale vandre handle mene meget gammel stærk "
           "smuk hurtig langsom sjov hver aften morgen dag nat er til på").split(),
    "no": ("og det som huset katten vinteren synge skogen fjellet vannet "
           "løpe lese skrive snakke vandre handle mene mye gammel sterk "
           "vakker rask langsom morsom hver kveld morgen dag natt er av på").split(),
    "is": ("og að það húsið kötturinn vetur syngja skógurinn fjallið vatnið "
           "hlaupa lesa skrifa tala ganga versla finnast mjög gamall sterkur "
           "fallegur hraður hægur skemmtilegur hvert kvöld morgunn dagur nótt er í á").split(),
    "en": ("the and that house winter with singing forest mountain water "
           "running reading writing talking walking shopping thinking very "
           "old strong beautiful fast slow funny every evening morning day "
           "night have been to of").split(),
}
STOPS = {
    "sv": ["och", "det", "som", "är", "för"],
    "da": ["og", "det", "den", "er", "til"],
    "no": ["og", "det", "som", "er", "av"],
    "is": ["og", "að", "það", "er", "í"],
    "en": ["the", "and", "that", "have", "of"],
}
LANGS = ["sv", "da", "no", "is", "en"]
CATS = ["articles", "books", "conversational", "miscellaneous", "web_cc",
        "web_sources", "wikipedia"]

def sentence(lang, n):
    pool = POOLS[lang]
    words = [random.choice(STOPS[lang])]
    words += [random.choice(pool) for _ in range(n - 1)]
    return " ".join(words)

def prose(lang, sentences=20, words_per=8):
    parts = [sentence(lang, words_per) for _ in range(sentences)]
    out = []
    for i, s in enumerate(parts):
        out.append(s + ".")
        out.append("\n" if i % 4 == 3 else " ")
    return "".join(out).strip()

def drop_last_sentence(text):
    sents = text.replace("\n", " ").split(". ")
    return ". ".join(sents[:-1]) + "."

CODE_SNIPPETS = [
    "def scale(values, factor):\n    out = []\n    for v in values:\n        out.append(v * factor)\n    return out",
    "def fib(n):\n    if n < 2:\n        return n\n    return fib(n - 1) + fib(n - 2)",
    "SELECT id, name\nFROM users\nWHERE age > 30\nORDER BY name;",
    "for f in *.txt; do\n    wc -l \"$f\"\ndone",
    "function mean(xs) {\n    let s = 0;\n    for (const x of xs) s += x;\n    return s / xs.length;\n}",
]

docs = []

def add(lang, category, source, text):
    docs.append({
        "id": f"doc-{len(docs):03d}",
        "lang": lang,
        "category": category,
        "source": source,
        "text": text,
    })

# 140 clean prose documents
base_texts = []
for i in range(140):
    lang = LANGS[i % len(LANGS)]
    category = CATS[i % len(CATS)]
    text = prose(lang, sentences=random.randint(12, 24))
    base_texts.append((lang, category, text))
    add(lang, category, "fixture-prose", text)

# 10 code documents (language-agnostic)
for i in range(10):
    snippet = CODE_SNIPPETS[i % len(CODE_SNIPPETS)]
    add("other", "code", "fixture-code", snippet + f"\n# variant {i}\n")

# 5 math documents (exempt from prose heuristics)
for i in range(5):
    lines = [f"{a} + {b} = {a + b}" for a, b in
             [(random.randint(1, 99), random.randint(1, 99)) for _ in range(8)]]
    add("en", "math", "fixture-math", "\n".join(lines))

# 15 junk documents the filter should reject
for i in range(15):
    kind = i % 3
    if kind == 0:
        text = sentence("sv", 6)  # far too short
    elif kind == 1:
        text = " ".join("#" for _ in range(80))  # symbol soup
    else:
        line = sentence("en", 10) + "."
        text = "\n".join([line] * 12)  # duplicated lines
    add(LANGS[i % len(LANGS)], "web_cc", "fixture-junk", text)

# 10 exact duplicates of clean documents
for i in range(10):
    lang, category, text = base_texts[i * 3]
    add(lang, category, "fixture-dup-exact", text)

# 15 near-duplicates: last sentence deleted
for i in range(15):
    lang, category, text = base_texts[i * 5 + 1]
    add(lang, category, "fixture-dup-near", drop_last_sentence(text))

# 5 documents with normalization dirt
dirty = [
    "forsta raden" + chr(13) + chr(10) + "andra raden" + chr(13) + chr(10) + "med smuts" + chr(0) + " kvar",
    "e" + chr(0x301) + "n kombinerad bokstav och" + chr(0x200B) + " osynliga" + chr(0x200D) + " tecken",
    "rad med slutblank   " + chr(10) + "och annu en rad  ",
    "for manga" + chr(10) * 5 + "blankrader har",
    "tabb" + chr(9) + "och" + chr(7) + "klocka",
]
for i, stem in enumerate(dirty):
    filler = prose("sv", sentences=14)
    add("sv", "miscellaneous", "fixture-dirty", stem + chr(10) + filler)

assert len(docs) == 200, len(docs)

with open("crates/cli/tests/fixtures/corpus_200.jsonl", "w", encoding="utf-8") as f:
    for d in docs:
        f.write(json.dumps(d, ensure_ascii=False) + "\n")
print(f"wrote {len(docs)} documents")
