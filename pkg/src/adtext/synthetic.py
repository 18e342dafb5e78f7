"""Synthetic ad-text corpora for demos and tests.

The real twelve-sector dataset is not public. ``keyword_corpus`` produces a
separable stand-in: every text mixes words drawn from its sector's keyword
list with filler words shared by all sectors. ``repetitive_corpus`` produces
highly regular phrases for masked-language-model sanity runs.

    python -m adtext.synthetic --per-class 200 --out corpus.jsonl
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

SECTORS: dict[str, list[str]] = {
    "Çiçek Siparişi": ["çiçek", "buket", "gül", "orkide", "çikolata", "saksı", "lale", "aranjman", "papatya", "sevgiliye"],
    "Evcil Hayvan Ürünleri": ["köpek", "kedi", "mama", "petshop", "tasma", "akvaryum", "kuş", "vitamin", "kum", "veteriner"],
    "Mücevher, Takı & Aksesuar": ["kolye", "bileklik", "yüzük", "küpe", "saat", "pırlanta", "altın", "gümüş", "taşlı", "takı"],
    "Nakliyat, Kargo": ["nakliye", "kargo", "taşıma", "depolama", "ambalaj", "evden", "eve", "asansörlü", "paketleme", "lojistik"],
    "Oto Aksesuar & Yedek Parça": ["jant", "lastik", "fren", "hidrolik", "koltuk", "araç", "motor", "yağ", "far", "egzoz"],
    "Oyunlar, Oyun Konsolları & Ekipmanları": ["oyun", "konsol", "joystick", "korku", "gamer", "kulaklık", "turnuva", "playstation", "kasa", "klavye"],
    "Psikolojik Danışmanlık": ["terapi", "psikolog", "öfke", "kaygı", "danışmanlık", "seans", "klinik", "depresyon", "stres", "ilaçsız"],
    "Temizlik & Halı Yıkama": ["temizlik", "halı", "yıkama", "deterjan", "leke", "koltuk yıkama", "dezenfeksiyon", "hijyen", "parlatma", "süpürge"],
    "Tur Acenteleri": ["tur", "otel", "tatil", "konaklama", "kapadokya", "gezi", "rehberli", "cruise", "balayı", "uçak"],
    "Vize İşlemleri": ["vize", "evraksız", "pasaport", "schengen", "konsolosluk", "randevu", "başvuru", "rusya", "oturum", "vizesi"],
    "Yabancı Dil Eğitimi": ["ingilizce", "almanca", "kurs", "dil", "müfredat", "konuşma", "drama", "öğretmen", "sertifika", "gramer"],
    "Yurtlar": ["yurt", "öğrenci", "oda", "wireless", "güvenlik", "yemekhane", "etüt", "kız", "erkek", "barınma"],
}

FILLER = [
    "en", "iyi", "uygun", "fiyat", "hızlı", "kolay", "güvenilir", "profesyonel", "hizmet", "fırsat",
    "özel", "indirim", "kampanya", "hemen", "şimdi", "bugün", "yeni", "kaliteli", "ucuz", "avantajlı",
    "size", "için", "ve", "ile", "tüm", "türkiye", "istanbul", "izmir", "ankara", "online",
]

DECORATIONS = ["", "!", ".", " %50", " 7/24", " &", "?"]

TEMPLATES = [
    "{a} ve {b} için en uygun fiyatlar",
    "hızlı ve kolay {a} {b} hizmeti",
    "{a} {b} fırsatları burada",
    "türkiye nin en iyi {a} ve {b} adresi",
    "profesyonel {a} ve {b} çözümleri",
]


def _title(word: str, rng: np.random.Generator) -> str:
    return word.capitalize() if rng.random() < 0.5 else word


def keyword_corpus(per_class: int = 200, seed: int = 0, sectors: dict[str, list[str]] | None = None) -> list[dict]:
    """JSONL-shaped records (id, category, text); texts are unique within a class."""
    sectors = sectors or SECTORS
    rng = np.random.default_rng(seed)
    records = []
    for category, keywords in sectors.items():
        seen: set[str] = set()
        attempts = 0
        while len(seen) < per_class:
            attempts += 1
            if attempts > per_class * 200:
                raise RuntimeError(f"cannot generate {per_class} distinct texts for {category!r}")
            n_kw = int(rng.integers(2, 4))
            n_fill = int(rng.integers(2, 5))
            words = list(rng.choice(keywords, size=n_kw, replace=False))
            words += list(rng.choice(FILLER, size=n_fill, replace=False))
            rng.shuffle(words)
            key = " ".join(words)
            if key in seen:
                continue
            seen.add(key)
            text = " ".join(_title(w, rng) for w in words) + DECORATIONS[int(rng.integers(len(DECORATIONS)))]
            records.append({"id": str(len(records)), "category": category, "text": text})
    return records


def repetitive_corpus(n: int = 600, seed: int = 0, slot_choices: int = 4) -> list[str]:
    """Template phrases whose two slots hold one of a sector's first ``slot_choices`` keywords."""
    rng = np.random.default_rng(seed)
    sectors = list(SECTORS.values())
    texts = []
    for _ in range(n):
        keywords = [w for w in sectors[int(rng.integers(len(sectors)))] if " " not in w][:slot_choices]
        a, b = rng.choice(keywords, size=2, replace=False)
        template = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
        texts.append(template.format(a=a, b=b))
    return texts


def write_jsonl(records: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="python -m adtext.synthetic", description=__doc__.split("\n\n")[0])
    parser.add_argument("--per-class", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    write_jsonl(keyword_corpus(args.per_class, args.seed), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
