"""Static analysis of hybrid Android apps (WebView bridges, URLs, injected JavaScript)."""

from .smali import ParseError, SmaliProgram, load_program, parse_smali_class
from .dataflow import HOLE_TOKEN, ResolvedString, backward_slice, find_resolved_arguments, resolve_string
from .bridges import SensitiveSourceDB, analyze_bridges, app_flags
from .urls import SdkHostDB, categorize_host, corpus_url_stats, parse_and_validate
from .js import classify_patterns, group_clones, tokenize_js
from .report import AnalysisConfig, aggregate, build_app_report, emit

__version__ = "0.1.0"
