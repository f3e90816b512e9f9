from .orchestrator import ExperimentOrchestrator, ExperimentState

__all__ = ["ExperimentOrchestrator", "ExperimentState"]
