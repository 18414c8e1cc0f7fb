#!/usr/bin/env python3
"""Freeze reference VADER outputs for the tone golden set.

Requires `pip install vaderSentiment==3.3.2`. Scores are written unrounded:
the reference rounds its dict output, so `round` is patched out of the module.
Sentence splitting and averaging mirror `toneshift_core::tone`.
"""
import html
import json
import re
import sys

import vaderSentiment.vaderSentiment as vs

vs.round = lambda x, n=None: x
ANALYZER = vs.SentimentIntensityAnalyzer()


def split_sentences(text):
    out = []
    for line in re.split(r"[\n\r]", text):
        for part in re.split(r"(?<=[.!?])\s+", line):
            if part.strip():
                out.append(part)
    return out


def document_tone(text):
    sentences = split_sentences(html.unescape(text))
    scored = [ANALYZER.polarity_scores(s) for s in sentences]
    if not scored:
        return {"pos": 0.0, "neg": 0.0, "neu": 1.0, "compound": 0.0}
    n = float(len(scored))
    return {k: sum(s[k] for s in scored) / n for k in ("pos", "neg", "neu", "compound")}


TEXTS = [
    "VADER is smart, handsome, and funny.",
    "VADER is VERY SMART, handsome, and FUNNY!!!",
    "VADER is VERY SMART, uber handsome, and FRIGGIN FUNNY!!!",
    "VADER is not smart, handsome, nor funny.",
    "The book was only kind of good.",
    "The plot was good, but the characters are uncompelling and the dialog is not great.",
    "Today only kinda sux! But I'll get by, lol",
    "Make sure you :) or :D today!",
    "Catch utf-8 emoji such as 💘 and 💋 and 😁",
    "Sentiment analysis has never been this good!",
    "Most automated sentiment analysis tools are shit.",
    "With VADER, sentiment analysis is the shit!",
    "On the other hand, VADER is quite bad ass",
    "Without a doubt, excellent idea.",
    "Roger Dodger is one of the least compelling variations on this theme.",
    "Roger Dodger is at least compelling as a variation on the theme.",
    "Not such a badass after all.",
    "There is no hope left for me and no love either.",
    "I feel so alone.   Nobody answers my messages??? Why even try",
    "Thank you. I am much worse now",
    "i am NOT okay, i am really really TIRED of everything",
    "It was one of the worst movies I've seen, despite good reviews. Unbelievably bad acting!! Poor direction.",
    "Hang in there &amp; keep going &lt;3",
    "I can't sleep.\nI can't eat.\nBut my therapist says I'm making progress!",
    "meh",
    "He is kind of sweet but sort of annoying, yeah right",
    "This is the bomb!!!! 😀😀",
    "I barely managed, it was hardly worth it, slightly better than nothing?",
    "No problem at all, glad to help",
    "It's a kiss of death for the project; still, to die for views.",
]


def main():
    rows = []
    for t in TEXTS:
        p = ANALYZER.polarity_scores(t)
        rows.append({"text": t, "polarity": p, "tone": document_tone(t)})
    json.dump(rows, sys.stdout, ensure_ascii=False, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
