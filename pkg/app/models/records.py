from pydantic import BaseModel

CSV_COLUMNS = (
    "env_steps",
    "return_mean",
    "return_std",
    "mean_q1",
    "mean_q2",
    "mean_beta_tilde",
    "classifier_accuracy",
    "wall_seconds",
)

# classifier_accuracy value when no classifier was fitted
NO_ACCURACY = -1.0


class UpdateDiagnostics(BaseModel):
    critic_loss: float = 0.0
    actor_objective: float = 0.0
    mean_q1: float = 0.0
    mean_q2: float = 0.0
    mean_beta_tilde: float = 1.0
    classifier_accuracy: float = NO_ACCURACY
    actor_updated: bool = False
    critic_skipped: bool = False
    actor_skipped: bool = False


class EvalRecord(BaseModel):
    env_steps: int
    return_mean: float
    return_std: float
    mean_q1: float = 0.0
    mean_q2: float = 0.0
    mean_beta_tilde: float = 1.0
    classifier_accuracy: float = NO_ACCURACY
    wall_seconds: float = 0.0

    def csv_row(self) -> list:
        return [str(self.env_steps)] + [repr(float(getattr(self, c))) for c in CSV_COLUMNS[1:]]
