"""Frozen TEI Lex-0 subset: parse, validate, serialize.

The subset is deliberately closed so validation and similarity scoring stay
deterministic: a ``div`` of ``entry`` elements, each with one lemma ``form``
(``orth``), an optional ``gramGrp`` (``pos``/``gram``) and ``sense`` elements
carrying a translation ``cit``/``quote`` plus optional ``usg`` and ``xr``.
Anything else is rejected. Entries with zero senses are accepted because a
tile cut mid-entry legitimately produces them; the merger stitches those.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from xml.sax.saxutils import escape, quoteattr

from .entries import (
    DictionaryEntry,
    EntryProvenance,
    JOIN_TOKEN,
    ParsedEntries,
    entry_from_mapping,
    strip_code_fence,
)
from .errors import SubsetViolation, XmlSyntax

XML_LANG = "{http://www.w3.org/XML/1998/namespace}lang"

# element -> attributes it may carry (required ones enforced separately)
ALLOWED_ATTRS = {
    "div": frozenset(),
    "entry": frozenset({"id"}),
    "form": frozenset({"type"}),
    "orth": frozenset(),
    "gramGrp": frozenset(),
    "pos": frozenset(),
    "gram": frozenset(),
    "sense": frozenset(),
    "cit": frozenset({"type", "xml:lang"}),
    "quote": frozenset(),
    "usg": frozenset({"type"}),
    "xr": frozenset({"type"}),
}


@dataclass(frozen=True)
class Sense:
    """One translation sense; empty strings mean the element is absent."""

    quote: str
    quote_lang: str = ""
    usg: str = ""
    usg_type: str = ""
    xr: str = ""
    xr_type: str = ""


@dataclass(frozen=True)
class TeiEntry:
    entry_id: str
    orth: str
    pos: str = ""
    gram: str = ""
    senses: tuple[Sense, ...] = ()

    def is_open(self) -> bool:
        """True when the entry has a lemma but no sense yet (cut mid-entry)."""
        return not self.senses


@dataclass(frozen=True)
class TeiDocument:
    entries: tuple[TeiEntry, ...] = ()


def _attr_name(key: str) -> str:
    if key == XML_LANG:
        return "xml:lang"
    if key.startswith("{"):
        return key  # foreign namespace; reported verbatim in the violation
    return key


def _check_element(elem: ET.Element, parent: str | None) -> None:
    tag = elem.tag
    if tag not in ALLOWED_ATTRS:
        raise SubsetViolation(f"element {tag!r} is outside the subset", element=tag, parent=parent)
    for key in elem.attrib:
        name = _attr_name(key)
        if name not in ALLOWED_ATTRS[tag]:
            raise SubsetViolation(
                f"attribute {name!r} is not allowed on {tag!r}", element=tag, attribute=name
            )


def _stray_text(elem: ET.Element) -> bool:
    if elem.text and elem.text.strip():
        return True
    return any(child.tail and child.tail.strip() for child in elem)


def _children(elem: ET.Element, parent: str) -> dict[str, list[ET.Element]]:
    grouped: dict[str, list[ET.Element]] = {}
    for child in elem:
        _check_element(child, parent)
        grouped.setdefault(child.tag, []).append(child)
    return grouped


def _leaf_text(elem: ET.Element) -> str:
    if len(elem):
        raise SubsetViolation(
            f"element {elem[0].tag!r} is not allowed inside {elem.tag!r}",
            element=elem[0].tag,
            parent=elem.tag,
        )
    return (elem.text or "").strip()


def _parse_sense(elem: ET.Element) -> Sense:
    groups = _children(elem, "sense")
    unexpected = set(groups) - {"cit", "usg", "xr"}
    if unexpected:
        bad = sorted(unexpected)[0]
        raise SubsetViolation(f"element {bad!r} is not allowed inside 'sense'", element=bad)
    cits = groups.get("cit", [])
    if len(cits) != 1:
        raise SubsetViolation(
            f"sense must contain exactly one 'cit', found {len(cits)}", element="sense"
        )
    cit = cits[0]
    if cit.get("type") != "translation":
        raise SubsetViolation(
            "cit requires type=\"translation\"", element="cit", attribute="type"
        )
    cit_groups = _children(cit, "cit")
    if set(cit_groups) - {"quote"} or len(cit_groups.get("quote", [])) != 1:
        raise SubsetViolation("cit must contain exactly one 'quote'", element="cit")
    sense_kwargs = {
        "quote": _leaf_text(cit_groups["quote"][0]),
        "quote_lang": cit.get(XML_LANG, ""),
    }
    for name in ("usg", "xr"):
        nodes = groups.get(name, [])
        if len(nodes) > 1:
            raise SubsetViolation(f"sense allows at most one {name!r}", element=name)
        if nodes:
            sense_kwargs[name] = _leaf_text(nodes[0])
            sense_kwargs[f"{name}_type"] = nodes[0].get("type", "")
    return Sense(**sense_kwargs)


def _parse_entry(elem: ET.Element) -> TeiEntry:
    entry_id = elem.get("id", "")
    if not entry_id:
        raise SubsetViolation("entry requires a non-empty id attribute", element="entry")
    groups = _children(elem, "entry")
    unexpected = set(groups) - {"form", "gramGrp", "sense"}
    if unexpected:
        bad = sorted(unexpected)[0]
        raise SubsetViolation(f"element {bad!r} is not allowed inside 'entry'", element=bad)
    forms = groups.get("form", [])
    if len(forms) != 1:
        raise SubsetViolation(
            f"entry {entry_id!r} must have exactly one lemma form, found {len(forms)}",
            element="form",
            entry=entry_id,
        )
    form = forms[0]
    if form.get("type") != "lemma":
        raise SubsetViolation(
            "form requires type=\"lemma\"", element="form", attribute="type", entry=entry_id
        )
    form_groups = _children(form, "form")
    if set(form_groups) - {"orth"} or len(form_groups.get("orth", [])) != 1:
        raise SubsetViolation(
            f"entry {entry_id!r}: form must contain exactly one 'orth'",
            element="orth",
            entry=entry_id,
        )
    orth = _leaf_text(form_groups["orth"][0])
    if not orth:
        raise SubsetViolation(f"entry {entry_id!r}: orth text is empty", element="orth", entry=entry_id)
    pos = gram = ""
    gram_grps = groups.get("gramGrp", [])
    if len(gram_grps) > 1:
        raise SubsetViolation("entry allows at most one gramGrp", element="gramGrp", entry=entry_id)
    if gram_grps:
        gg_groups = _children(gram_grps[0], "gramGrp")
        if set(gg_groups) - {"pos", "gram"} or not gg_groups:
            raise SubsetViolation(
                "gramGrp must contain 'pos' and/or 'gram'", element="gramGrp", entry=entry_id
            )
        for name, nodes in gg_groups.items():
            if len(nodes) > 1:
                raise SubsetViolation(f"gramGrp allows at most one {name!r}", element=name)
        if "pos" in gg_groups:
            pos = _leaf_text(gg_groups["pos"][0])
        if "gram" in gg_groups:
            gram = _leaf_text(gg_groups["gram"][0])
    senses = tuple(_parse_sense(node) for node in groups.get("sense", []))
    return TeiEntry(entry_id=entry_id, orth=orth, pos=pos, gram=gram, senses=senses)


def parse_tei_fragment(xml: str) -> TeiDocument:
    """Parse and validate one fragment against the frozen subset.

    Entries come back in document order. Elements or attributes outside the
    subset raise :class:`SubsetViolation` naming the offender.
    """
    body = strip_code_fence(xml)
    try:
        root = ET.fromstring(body)
    except ET.ParseError as exc:
        raise XmlSyntax(f"not well-formed XML: {exc}", position=exc.position) from exc
    _check_element(root, None)
    if root.tag != "div":
        raise SubsetViolation(f"root element must be 'div', got {root.tag!r}", element=root.tag)
    if _stray_text(root):
        raise SubsetViolation("stray text inside 'div'", element="div")
    entries = []
    seen_ids: set[str] = set()
    for child in root:
        _check_element(child, "div")
        if child.tag != "entry":
            raise SubsetViolation(
                f"element {child.tag!r} is not allowed inside 'div'", element=child.tag
            )
        for elem in child.iter():
            if _stray_text(elem) and elem.tag not in ("orth", "pos", "gram", "quote", "usg", "xr"):
                raise SubsetViolation(f"stray text inside {elem.tag!r}", element=elem.tag)
        entry = _parse_entry(child)
        if entry.entry_id in seen_ids:
            raise SubsetViolation(
                f"duplicate entry id {entry.entry_id!r}", element="entry", entry=entry.entry_id
            )
        seen_ids.add(entry.entry_id)
        entries.append(entry)
    return TeiDocument(tuple(entries))


def validate_document(doc: TeiDocument) -> None:
    """Raise SubsetViolation when a constructed document breaks an invariant."""
    seen: set[str] = set()
    for entry in doc.entries:
        if not entry.entry_id:
            raise SubsetViolation("entry id must be non-empty", element="entry")
        if entry.entry_id in seen:
            raise SubsetViolation(f"duplicate entry id {entry.entry_id!r}", element="entry")
        seen.add(entry.entry_id)
        if not entry.orth.strip():
            raise SubsetViolation(f"entry {entry.entry_id!r}: orth text is empty", element="orth")


def _sense_attrs(sense: Sense) -> list[tuple[str, str]]:
    attrs = [("type", "translation")]
    if sense.quote_lang:
        attrs.append(("xml:lang", sense.quote_lang))
    return attrs


def serialize_tei(doc: TeiDocument) -> str:
    """Deterministic serialization: fixed attribute order, two-space indent."""
    validate_document(doc)

    def leaf(name: str, text: str, attrs: list[tuple[str, str]], depth: int) -> str:
        pad = "  " * depth
        rendered = "".join(f" {key}={quoteattr(value)}" for key, value in attrs)
        return f"{pad}<{name}{rendered}>{escape(text)}</{name}>"

    lines = ['<?xml version="1.0" encoding="UTF-8"?>', "<div>"]
    for entry in doc.entries:
        lines.append(f'  <entry id={quoteattr(entry.entry_id)}>')
        lines.append('    <form type="lemma">')
        lines.append(leaf("orth", entry.orth, [], 3))
        lines.append("    </form>")
        if entry.pos or entry.gram:
            lines.append("    <gramGrp>")
            if entry.pos:
                lines.append(leaf("pos", entry.pos, [], 3))
            if entry.gram:
                lines.append(leaf("gram", entry.gram, [], 3))
            lines.append("    </gramGrp>")
        for sense in entry.senses:
            lines.append("    <sense>")
            attrs = "".join(f" {key}={quoteattr(value)}" for key, value in _sense_attrs(sense))
            lines.append(f"      <cit{attrs}>")
            lines.append(leaf("quote", sense.quote, [], 4))
            lines.append("      </cit>")
            if sense.usg:
                lines.append(leaf("usg", sense.usg, [("type", sense.usg_type)] if sense.usg_type else [], 3))
            if sense.xr:
                lines.append(leaf("xr", sense.xr, [("type", sense.xr_type)] if sense.xr_type else [], 3))
            lines.append("    </sense>")
        lines.append("  </entry>")
    lines.append("</div>")
    return "\n".join(lines) + "\n"


def structure_tokens(doc: TeiDocument) -> tuple[str, ...]:
    """Depth-first pre-order element tokens, attribute pairs sorted by name."""

    def token(name: str, attrs: list[tuple[str, str]]) -> str:
        parts = [name] + [f"{key}={value}" for key, value in sorted(attrs)]
        return " ".join(parts)

    tokens = ["div"]
    for entry in doc.entries:
        tokens.append(token("entry", [("id", entry.entry_id)]))
        tokens.append(token("form", [("type", "lemma")]))
        tokens.append("orth")
        if entry.pos or entry.gram:
            tokens.append("gramGrp")
            if entry.pos:
                tokens.append("pos")
            if entry.gram:
                tokens.append("gram")
        for sense in entry.senses:
            tokens.append("sense")
            tokens.append(token("cit", _sense_attrs(sense)))
            tokens.append("quote")
            if sense.usg:
                tokens.append(token("usg", [("type", sense.usg_type)] if sense.usg_type else []))
            if sense.xr:
                tokens.append(token("xr", [("type", sense.xr_type)] if sense.xr_type else []))
    return tuple(tokens)


def text_nodes(doc: TeiDocument) -> tuple[str, ...]:
    """Non-empty text node values in document order, each trimmed."""
    nodes: list[str] = []
    for entry in doc.entries:
        for value in _entry_texts(entry):
            stripped = value.strip()
            if stripped:
                nodes.append(stripped)
    return tuple(nodes)


def _entry_texts(entry: TeiEntry) -> list[str]:
    values = [entry.orth]
    if entry.pos:
        values.append(entry.pos)
    if entry.gram:
        values.append(entry.gram)
    for sense in entry.senses:
        values.append(sense.quote)
        if sense.usg:
            values.append(sense.usg)
        if sense.xr:
            values.append(sense.xr)
    return values


# --- conversions to and from the nine-field model ---------------------------

_ID_SAFE_RE = re.compile(r"[^A-Za-z0-9_.-]+")


def document_to_entries(doc: TeiDocument, base: EntryProvenance | None = None) -> ParsedEntries:
    """Map TEI entries onto the nine-field model.

    Quotes become the German equivalent plus synonyms; ``usg`` is folded into
    the grammar note. Cross-references have no nine-field slot and are
    reported as warnings.
    """
    base = base or EntryProvenance()
    warnings: list[str] = []
    entries: list[DictionaryEntry] = []
    for index, tei_entry in enumerate(doc.entries):
        quotes = [sense.quote for sense in tei_entry.senses if sense.quote]
        gram_bits = [tei_entry.gram] if tei_entry.gram else []
        gram_bits += [sense.usg for sense in tei_entry.senses if sense.usg]
        for sense in tei_entry.senses:
            if sense.xr:
                warnings.append(
                    f"entry {tei_entry.entry_id}: cross-reference {sense.xr!r} has no nine-field slot"
                )
        mapping = {
            "headword_et": tei_entry.orth,
            "equivalent_de": quotes[0] if quotes else "",
            "synonyms_de": quotes[1:],
            "part_of_speech": tei_entry.pos,
            "grammar_info": JOIN_TOKEN.join(gram_bits),
        }
        prov = replace(base, order_on_page=base.order_on_page + index)
        entries.append(entry_from_mapping(mapping, index, prov, warnings))
    return ParsedEntries(tuple(entries), tuple(warnings))


def entries_to_document(entries: tuple[DictionaryEntry, ...] | list[DictionaryEntry]) -> TeiDocument:
    """Canonical TEI rendering of nine-field entries (synonym/MWE fields are
    not representable in the subset and are omitted)."""
    tei_entries = []
    for index, entry in enumerate(entries, start=1):
        senses = []
        if entry.equivalent_de:
            senses.append(Sense(quote=entry.equivalent_de, quote_lang="de"))
        senses.extend(Sense(quote=synonym, quote_lang="de") for synonym in entry.synonyms_de)
        safe = _ID_SAFE_RE.sub("-", entry.headword_et) or "entry"
        tei_entries.append(
            TeiEntry(
                entry_id=f"e{index}-{safe}",
                orth=entry.headword_et,
                pos=entry.part_of_speech,
                gram=entry.grammar_info,
                senses=tuple(senses),
            )
        )
    return TeiDocument(tuple(tei_entries))
