#!/usr/bin/env python3
"""Regenerates data/monuments.nt, a small deterministic monument graph.

The file is checked in; rerun this only when the world needs to change.
"""

import os

DBR = "http://dbpedia.org/resource/"
DBO = "http://dbpedia.org/ontology/"
RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"

PLACES = [
    "Carew", "Ardmore", "Kells", "Clonmacnoise", "Durrow", "Monasterboice",
    "Castledermot", "Moone", "Drumcliff", "Glendalough", "Iona", "Oran",
    "Tuam", "Cashel", "Dysert", "Kilfenora",
]
TYPES = [
    "Cross", "Obelisk", "Column", "Arch", "Gate", "Tower", "Fountain",
    "Statue", "Memorial", "Bridge",
]
GERMAN_TYPES = {"Gate": "Tor", "Tower": "Turm", "Bridge": "Bruecke"}
CITIES = [
    "Dublin", "Cork", "Galway", "Limerick", "Belfast", "Derry", "Sligo",
    "Kilkenny", "Waterford", "Athlone", "Tralee", "Omagh", "Newry", "Armagh",
    "Bangor", "Lisburn",
]
COUNTRIES = [
    "Ireland", "France", "Germany", "Italy", "Spain", "Poland", "Austria",
    "Portugal",
]
ARCHITECTS = [
    "James_Gandon", "Thomas_Cooley", "Francis_Johnston", "John_Roberts",
    "Richard_Cassels", "Edward_Pearce", "Thomas_Burgh", "William_Robinson",
    "Benjamin_Woodward", "Thomas_Deane", "John_Bowden", "George_Papworth",
    "William_Murray", "Jacob_Owen", "Charles_Lanyon", "William_Barre",
    "Thomas_Turner", "John_Lanyon", "Sara_Losh", "Eileen_Gray",
]
# a few labels with the punctuation the question tokenizer has to survive
FANCY_LABELS = {
    40: "St. Declan's Oratory",
    41: "O'Connell Monument",
    42: "No. 1 Obelisk",
}
EXTRA_GERMAN = {4, 20, 36}    # these carry an @de label besides the @en one
GERMAN_ONLY = {150, 155}      # these have no usable English label at all


def lines():
    out = []

    def triple(s, p, o):
        out.append(f"<{s}> <{p}> {o} .")

    def lit(value, lang=""):
        tag = f"@{lang}" if lang else ""
        return f'"{value}"{tag}'

    for i, name in enumerate(COUNTRIES):
        c = DBR + name
        triple(c, RDF + "type", f"<{DBO}Country>")
        triple(c, RDFS + "label", lit(name.replace("_", " "), "en"))

    for i, name in enumerate(CITIES):
        c = DBR + name
        triple(c, RDF + "type", f"<{DBO}City>")
        triple(c, RDFS + "label", lit(name.replace("_", " "), "en"))
        triple(c, DBO + "country", f"<{DBR}{COUNTRIES[i % len(COUNTRIES)]}>")

    for i, name in enumerate(ARCHITECTS):
        a = DBR + name
        triple(a, RDF + "type", f"<{DBO}Architect>")
        triple(a, RDFS + "label", lit(name.replace("_", " "), "en"))
        triple(a, DBO + "birthYear", lit(str(1700 + (i * 13) % 200)))

    for i in range(160):
        place = PLACES[i % len(PLACES)]
        kind = TYPES[i // len(PLACES)]
        local = f"{place}_{kind}"
        m = DBR + local
        label = FANCY_LABELS.get(i, f"{place} {kind}")
        city = CITIES[i % len(CITIES)]
        country = COUNTRIES[(i % len(CITIES)) % len(COUNTRIES)]

        triple(m, RDF + "type", f"<{DBO}Monument>")
        if i not in GERMAN_ONLY:
            triple(m, RDFS + "label", lit(label, "en"))
        if i in EXTRA_GERMAN or i in GERMAN_ONLY:
            german_kind = GERMAN_TYPES.get(kind, kind)
            triple(m, RDFS + "label", lit(f"{place} {german_kind}", "de"))
        triple(m, DBO + "location", f"<{DBR}{city}>")
        triple(m, DBO + "country", f"<{DBR}{country}>")
        triple(m, DBO + "yearOfConstruction", lit(str(1100 + (i * 37) % 900)))
        triple(m, DBO + "height", lit(f"{5 + (i * 13) % 40}.{i % 10}"))
        if i % 10 < 7:
            architect = ARCHITECTS[i % len(ARCHITECTS)]
            triple(m, DBO + "architect", f"<{DBR}{architect}>")
            triple(DBR + architect, DBO + "knownFor", f"<{m}>")
        if i % 2 == 0:
            builder = ARCHITECTS[(i + 7) % len(ARCHITECTS)]
            triple(m, DBO + "builder", f"<{DBR}{builder}>")

    return out


def main():
    here = os.path.dirname(os.path.abspath(__file__))
    path = os.path.join(here, "..", "data", "monuments.nt")
    body = lines()
    with open(path, "w", newline="\n") as f:
        f.write("# deterministic monument world; regenerate with scripts/gen_monuments.py\n")
        f.write("\n".join(body))
        f.write("\n")
    print(f"wrote {len(body)} triples to {os.path.normpath(path)}")


if __name__ == "__main__":
    main()
