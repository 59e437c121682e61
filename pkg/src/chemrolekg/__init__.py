"""Build a knowledge graph of chemical entities and their roles from paper text."""
from .annotate import Mention, gazetteer_annotate, merge_annotations
from .corpus import DocumentStore, compute_checksum, ingest_document, segment_sentences
from .estimators import GazetteerAnnotator, KnowledgeGraphBuilder
from .kg import KnowledgeGraph, aggregate, apply_min_ref, emit_html, emit_rdf_star, emit_turtle
from .ontology import Lexicon, Ontology, TermKind, build_lexicon, classify, parse_obo
from .validate import PromptTemplate, SamplingConfig, Verdict, parse_answer, render_prompts

__version__ = "0.1.0"
