from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TypedDict, Annotated, Union
import operator

import pandas as pd
from langgraph.graph import StateGraph, END

from src.cli import commands
from src.cli.run_config import RunConfig
from src.errors import LandmarkError
from src.logger import logger

STEPS = ("synthesize", "train", "evaluate", "classify", "baseline")


class ExperimentState(TypedDict):
    """State carried through the experiment graph."""
    messages: Annotated[List[str], operator.add]
    config: RunConfig
    paths: Dict[str, str]
    results: Dict[str, Dict[str, Any]]
    error: Optional[str]
    exception: Optional[LandmarkError]
    current_step: str


class ExperimentOrchestrator:
    """LangGraph workflow: synthesize -> train -> evaluate -> classify -> baseline.

    Each stage writes into its own directory under ``out``; a failing stage
    stores the error in the state and routes to ``handle_error``.
    """

    def __init__(self, config: RunConfig, out: Union[str, Path], force: bool = False):
        self.config = config
        self.out = Path(out)
        self.force = force
        self.workflow = self._build_workflow()

    def _build_workflow(self):
        workflow = StateGraph(ExperimentState)

        workflow.add_node("synthesize", self.synthesize)
        workflow.add_node("train", self.train)
        workflow.add_node("evaluate", self.evaluate)
        workflow.add_node("classify", self.classify)
        workflow.add_node("baseline", self.baseline)
        workflow.add_node("handle_error", self.handle_error)

        for step, following in zip(STEPS, [*STEPS[1:], END]):
            workflow.add_conditional_edges(step, self._route(following), {following: following,
                                                                          "handle_error": "handle_error"})
        workflow.add_edge("handle_error", END)
        workflow.set_entry_point("synthesize")
        return workflow.compile()

    @staticmethod
    def _route(following: str):
        def route(state: ExperimentState) -> str:
            return "handle_error" if state.get("error") else following
        return route

    def _stage(self, state: ExperimentState, step: str, action) -> Dict[str, Any]:
        logger.info("Experiment stage", step=step)
        try:
            path, result = action(state)
        except LandmarkError as e:
            logger.error(f"Error in {step}: {e}")
            return {"current_step": step, "error": str(e), "exception": e}
        return {
            "current_step": step,
            "paths": {**state["paths"], step: str(path)},
            "results": {**state["results"], step: result},
            "messages": [f"{step} completed"],
        }

    def synthesize(self, state: ExperimentState) -> Dict[str, Any]:
        def action(s):
            path = self.out / "cohort"
            return path, commands.cmd_synthesize(s["config"], path, self.force)
        return self._stage(state, "synthesize", action)

    def train(self, state: ExperimentState) -> Dict[str, Any]:
        def action(s):
            path = self.out / "train"
            return path, commands.cmd_train(s["config"], s["paths"]["synthesize"], path, self.force)
        return self._stage(state, "train", action)

    def evaluate(self, state: ExperimentState) -> Dict[str, Any]:
        def action(s):
            path = self.out / "eval"
            checkpoint = s["results"]["train"].get("checkpoint") or None
            return path, commands.cmd_eval(s["config"], s["paths"]["synthesize"], path, checkpoint,
                                           force=self.force)
        return self._stage(state, "evaluate", action)

    def classify(self, state: ExperimentState) -> Dict[str, Any]:
        def action(s):
            path = self.out / "classify"
            checkpoint = s["results"]["train"].get("checkpoint") or None
            return path, commands.cmd_classify(s["config"], s["paths"]["synthesize"], path, checkpoint,
                                               force=self.force)
        return self._stage(state, "classify", action)

    def baseline(self, state: ExperimentState) -> Dict[str, Any]:
        """The same classifier on untrained grid landmarks."""
        def action(s):
            path = self.out / "baseline"
            result = commands.cmd_classify(s["config"], s["paths"]["synthesize"], path, None, force=self.force)
            return path, {**result, "ap_gap": s["results"]["classify"]["ap"] - result["ap"]}
        return self._stage(state, "baseline", action)

    def handle_error(self, state: ExperimentState) -> Dict[str, Any]:
        """Handle errors in the workflow."""
        logger.error(f"Workflow error at step {state.get('current_step')}: {state.get('error')}")
        return {"messages": [f"Error occurred in {state.get('current_step')}: {state.get('error')}"]}

    def run(self, config: Optional[RunConfig] = None, out: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
        """Run the complete experiment; returns a status dict."""
        if out is not None:
            self.out = Path(out)
        initial_state = ExperimentState(
            messages=[f"experiment in {self.out}"],
            config=config or self.config,
            paths={},
            results={},
            error=None,
            exception=None,
            current_step="start",
        )
        logger.info("Starting experiment", out=str(self.out), seed=initial_state["config"].seed)

        final_state = self.workflow.invoke(initial_state)
        if final_state.get("error"):
            return {
                "status": "error",
                "error": final_state["error"],
                "exception": final_state.get("exception"),
                "step": final_state.get("current_step"),
            }
        return {
            "status": "success",
            "results": final_state["results"],
            "paths": final_state["paths"],
            "steps_completed": list(STEPS),
            "messages": final_state["messages"],
        }

    def _ablate(self, config: RunConfig, root: Path) -> Dict[str, Any]:
        full = self.run(config=config, out=root / "full")
        if full["status"] != "success":
            return full
        ablated_config = config.model_copy(update={"loss": config.loss.model_copy(update={"lambda_d": 0.0})})
        cohort_dir = full["paths"]["synthesize"]
        try:
            trained = commands.cmd_train(ablated_config, cohort_dir, root / "no_discovery" / "train", self.force)
            evaluated = commands.cmd_eval(ablated_config, cohort_dir, root / "no_discovery" / "eval",
                                          trained.get("checkpoint") or None, force=self.force)
        except LandmarkError as e:
            logger.error(f"Error in ablation: {e}")
            return {"status": "error", "error": str(e), "exception": e, "step": "ablation"}

        results = full["results"]
        ordered_full = results["evaluate"]["ordered_total"]
        ordered_ablated = evaluated["ordered_total"]
        return {
            "status": "success",
            "seed": config.seed,
            "ordered_full": ordered_full,
            "ordered_without_discovery": ordered_ablated,
            "ratio": ordered_full / ordered_ablated if ordered_ablated > 0 else float("inf"),
            "recon_ratio": results["evaluate"].get("recon_ratio", float("nan")),
            "ap": results["classify"]["ap"],
            "ap_baseline": results["baseline"]["ap"],
            "ap_gap": results["baseline"]["ap_gap"],
        }

    def run_ablation(self, seeds: Optional[Sequence[int]] = None) -> Dict[str, Any]:
        """Full loss against the same run without the discovery term, once per seed.

        Each seed synthesizes its own cohort under ``out/seed_<s>``. ``ratio``
        is the full run's ordered consistency error over the ablated one,
        averaged over seeds; ``ablation.csv`` holds the per-seed rows.
        """
        root = self.out
        seeds = list(seeds) if seeds else [self.config.seed]
        rows = []
        for seed in seeds:
            row = self._ablate(self.config.with_seed(seed), root / f"seed_{seed}")
            self.out = root
            if row["status"] != "success":
                return row
            rows.append({k: v for k, v in row.items() if k != "status"})

        frame = pd.DataFrame(rows)
        root.mkdir(parents=True, exist_ok=True)
        frame.to_csv(root / "ablation.csv", index=False)
        summary = {
            "status": "success",
            "seeds": seeds,
            "ordered_full": float(frame["ordered_full"].mean()),
            "ordered_without_discovery": float(frame["ordered_without_discovery"].mean()),
            "ratio": float(frame["ratio"].mean()),
            "ratio_max": float(frame["ratio"].max()),
            "ap": float(frame["ap"].mean()),
            "ap_gap": float(frame["ap_gap"].mean()),
            "per_seed": rows,
        }
        logger.info("Ablation finished", seeds=seeds, ratio=round(summary["ratio"], 4),
                    ratio_max=round(summary["ratio_max"], 4), ap_gap=round(summary["ap_gap"], 4))
        return summary
