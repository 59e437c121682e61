"""Golden fixture: two chemicals sharing the buffer role, and its expected Turtle."""
from chemrolekg.candidates import CandidatePair
from chemrolekg.corpus import TextLocation
from chemrolekg.validate import Verdict, VerdictRecord

MINI3_OBO = """format-version: 1.2

[Term]
id: CHEBI:35225
name: buffer
is_a: CHEBI:50906 ! role

[Term]
id: CHEBI:30741
name: ethylene glycol bis(2-aminoethyl)tetraacetate
synonym: "EGTA" RELATED [ChEBI]
is_a: CHEBI:24431 ! chemical entity

[Term]
id: CHEBI:50906
name: role
"""

# expected graph for the fixture; only the digits of the CEAR local name may differ
REFERENCE_TTL = """@prefix rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
@prefix obo: <http://purl.obolibrary.org/obo/> .
@prefix cear: <https://wwwiti.cs.uni-magdeburg.de/iti_dke/cear/> .

obo:CHEBI_35225 rdf:type obo:CHEBI_50906 .
obo:CHEBI_35225 rdfs:label "buffer" .

obo:CHEBI_30741 rdf:type obo:CHEBI_24431 .
obo:CHEBI_30741 rdfs:label "ethylene glycol bis(2-aminoethyl)tetraacetate" .
obo:CHEBI_30741 obo:RO_0000087 obo:CHEBI_35225 .

cear:chem_4023 rdf:type obo:CHEBI_24431 .
cear:chem_4023 rdfs:label "PBS" .
cear:chem_4023 obo:RO_0000087 obo:CHEBI_35225 .
"""

DOC = "b" * 64


def golden_records():
    s1 = "EGTA (ethylene glycol bis(2-aminoethyl)tetraacetate) served as buffer."
    s2 = "PBS was used as a buffer."
    return [
        VerdictRecord(CandidatePair(TextLocation(DOC, 1, 0), s1,
                                    "ethylene glycol bis(2-aminoethyl)tetraacetate", "buffer"),
                      Verdict.CONFIRMED, "yes", "stub"),
        VerdictRecord(CandidatePair(TextLocation(DOC, 2, 10), s2, "PBS", "buffer"),
                      Verdict.CONFIRMED, "yes", "stub"),
        VerdictRecord(CandidatePair(TextLocation(DOC, 2, 40), "PBS and buffer.", "PBS", "buffer"),
                      Verdict.REJECTED, "no", "stub"),
    ]
