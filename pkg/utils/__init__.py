# Utils package for helper functions
# Centralized utility modules

from .jsonl_helper import dumps_line, iter_jsonl, read_jsonl, to_jsonl
from .seeding import derive_seed

__all__ = ["derive_seed", "dumps_line", "iter_jsonl", "read_jsonl", "to_jsonl"]
