from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

import pandas as pd

from src.errors import DataError
from src.losses.total import LOG_COLUMNS

STEP_COLUMNS = ["step", "epoch", "lr", *LOG_COLUMNS, "grad_norm", "out_of_domain"]
VALIDATION_COLUMNS = ["epoch", "lr", "val_ordered_total", "val_chamfer"]


@dataclass
class TrainLog:
    """Per-step loss rows, per-epoch validation and wall-clock seconds."""

    rows: List[Dict[str, float]] = field(default_factory=list)
    validation: List[Dict[str, float]] = field(default_factory=list)
    wall_clock: float = 0.0

    def add_step(self, row: Dict[str, float]) -> None:
        if self.rows and row["step"] <= self.rows[-1]["step"]:
            raise DataError(f"step {row['step']} does not follow {self.rows[-1]['step']}")
        self.rows.append(row)

    def steps_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=STEP_COLUMNS)

    def validation_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.validation, columns=VALIDATION_COLUMNS)

    def write(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.steps_frame().to_csv(directory / "train_log.csv", index=False)
        self.validation_frame().to_csv(directory / "validation.csv", index=False)
        return directory
