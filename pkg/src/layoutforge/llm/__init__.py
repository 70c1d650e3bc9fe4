from layoutforge.llm.gateway import (
    Cassette,
    DecodeParams,
    Gateway,
    LiveBackend,
    OracleRequest,
    RecordBackend,
    ReplayBackend,
    cassette_load,
    cassette_persist,
    complete,
    make_gateway,
)
from layoutforge.llm.jsonx import extract_json
from layoutforge.llm.templates import TEMPLATE_IDS, PromptTemplate, get_template, render_prompt

__all__ = [
    "Cassette", "DecodeParams", "Gateway", "LiveBackend", "OracleRequest", "RecordBackend",
    "ReplayBackend", "cassette_load", "cassette_persist", "complete", "make_gateway",
    "extract_json", "TEMPLATE_IDS", "PromptTemplate", "get_template", "render_prompt",
]
