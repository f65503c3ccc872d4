#!/usr/bin/env python3
"""Regenerate the bundled mini En/De corpus under src/dialmask/data/mini_bilingual/.

Two "films" of 150 lines each.  The first opens with the bat scene used as the
golden example; the rest is drawn from a phrase table with a fixed seed.
"""

import argparse
import random
from pathlib import Path

OPENING = [
    ("Who is it, Martin?", "Wer ist denn da, Martin?"),
    ("A bat, Professor.", "Eine Fledermaus, Herr Professor."),
    ("Very big and black.", "Sehr groß und pechschwarz."),
    ("Don't waste your pellets.", "Verschwenden Sie kein Schrot darauf."),
    ("It's no use.", "Es ist zwecklos."),
    ("You'll never harm that bat.", "Dieser Fledermaus können Sie nichts anhaben."),
]

PHRASES = [
    ("Where are you going?", "Wohin gehst du?"),
    ("I don't know.", "Ich weiß es nicht."),
    ("Come in, please.", "Komm bitte herein."),
    ("Close the door.", "Mach die Tür zu."),
    ("It is very late.", "Es ist sehr spät."),
    ("We have to leave now.", "Wir müssen jetzt gehen."),
    ("Did you hear that?", "Hast du das gehört?"),
    ("Something is outside.", "Da draußen ist etwas."),
    ("Stay here with me.", "Bleib hier bei mir."),
    ("Where is the key?", "Wo ist der Schlüssel?"),
    ("On the table.", "Auf dem Tisch."),
    ("Thank you very much.", "Vielen Dank."),
    ("You are welcome.", "Gern geschehen."),
    ("What time is it?", "Wie spät ist es?"),
    ("Almost midnight.", "Fast Mitternacht."),
    ("The train leaves at five.", "Der Zug fährt um fünf ab."),
    ("I need a room for tonight.", "Ich brauche ein Zimmer für heute Nacht."),
    ("The hotel is full.", "Das Hotel ist voll."),
    ("Is there a restaurant nearby?", "Gibt es hier in der Nähe ein Restaurant?"),
    ("Yes, in the centre.", "Ja, im Zentrum."),
    ("I am hungry.", "Ich habe Hunger."),
    ("Let us eat something.", "Lass uns etwas essen."),
    ("The food is cold.", "Das Essen ist kalt."),
    ("Call the doctor!", "Ruf den Arzt!"),
    ("He is not here.", "Er ist nicht hier."),
    ("She went to the station.", "Sie ist zum Bahnhof gegangen."),
    ("When will she come back?", "Wann kommt sie zurück?"),
    ("Tomorrow morning.", "Morgen früh."),
    ("I will wait for her.", "Ich werde auf sie warten."),
    ("Look at the window.", "Sieh zum Fenster."),
    ("There is nobody there.", "Da ist niemand."),
    ("Are you sure?", "Bist du sicher?"),
    ("Absolutely sure.", "Absolut sicher."),
    ("Give me the letter.", "Gib mir den Brief."),
    ("I have already read it.", "Ich habe ihn schon gelesen."),
    ("What does it say?", "Was steht darin?"),
    ("Nothing important.", "Nichts Wichtiges."),
    ("You are lying.", "Du lügst."),
    ("Why would I lie?", "Warum sollte ich lügen?"),
    ("The professor is waiting.", "Der Professor wartet."),
    ("Tell him I am coming.", "Sag ihm, dass ich komme."),
    ("The night is cold.", "Die Nacht ist kalt."),
    ("Take my coat.", "Nimm meinen Mantel."),
    ("How much does it cost?", "Wie viel kostet das?"),
    ("Ten marks.", "Zehn Mark."),
    ("That is too expensive.", "Das ist zu teuer."),
    ("I can pay tomorrow.", "Ich kann morgen bezahlen."),
    ("Good night, Martin.", "Gute Nacht, Martin."),
    ("Good morning, Professor.", "Guten Morgen, Herr Professor."),
    ("Did you sleep well?", "Hast du gut geschlafen?"),
    ("Not at all.", "Überhaupt nicht."),
    ("The bat came back.", "Die Fledermaus kam zurück."),
    ("We must find it.", "Wir müssen sie finden."),
    ("Bring the lamp.", "Bring die Lampe."),
    ("It is too dark here.", "Hier ist es zu dunkel."),
    ("Follow me.", "Folge mir."),
    ("Be quiet!", "Sei still!"),
    ("I am afraid.", "Ich habe Angst."),
    ("There is no reason to be afraid.", "Es gibt keinen Grund, Angst zu haben."),
    ("Open the box.", "Öffne die Kiste."),
    ("It is empty.", "Sie ist leer."),
    ("Who took it?", "Wer hat es genommen?"),
    ("Perhaps the servant.", "Vielleicht der Diener."),
    ("Ask him yourself.", "Frag ihn selbst."),
    ("I would like a cheap hotel.", "Ich möchte ein günstiges Hotel."),
    ("In the south, please.", "Im Süden, bitte."),
    ("With parking, if possible.", "Mit Parkplatz, wenn möglich."),
    ("I need to arrive by five.", "Ich muss bis fünf Uhr ankommen."),
    ("Which day do you travel?", "An welchem Tag reisen Sie?"),
    ("On Saturday.", "Am Samstag."),
]


def film(rng: random.Random, n: int, opening=()) -> list:
    lines = list(opening)
    while len(lines) < n:
        lines.append(rng.choice(PHRASES))
    return lines


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default_out = Path(__file__).resolve().parents[1] / "src" / "dialmask" / "data" / "mini_bilingual"
    ap.add_argument("--out", type=Path, default=default_out)
    ap.add_argument("--seed", type=int, default=1958)
    ap.add_argument("--film-length", type=int, default=150)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    films = [film(rng, args.film_length, OPENING), film(rng, args.film_length)]
    args.out.mkdir(parents=True, exist_ok=True)
    src, tgt, bounds = [], [], []
    for i, lines in enumerate(films):
        bounds.append(f"{len(src)}\tfilm{i + 1}")
        src.extend(en for en, _ in lines)
        tgt.extend(de for _, de in lines)
    (args.out / "src.txt").write_text("\n".join(src) + "\n", encoding="utf-8")
    (args.out / "tgt.txt").write_text("\n".join(tgt) + "\n", encoding="utf-8")
    (args.out / "boundaries.txt").write_text("\n".join(bounds) + "\n", encoding="utf-8")
    print(f"wrote {len(src)} aligned lines in {len(films)} films to {args.out}")


if __name__ == "__main__":
    main()
