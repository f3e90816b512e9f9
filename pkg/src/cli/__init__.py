from .run_config import RunConfig, load_run_config, parse_override
from .commands import cmd_classify, cmd_eval, cmd_saliency, cmd_synthesize, cmd_train, prepare_out

__all__ = [
    "RunConfig",
    "load_run_config",
    "parse_override",
    "cmd_classify",
    "cmd_eval",
    "cmd_saliency",
    "cmd_synthesize",
    "cmd_train",
    "prepare_out",
]
