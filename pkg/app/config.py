from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="LPP_LAB_", env_file=".env", env_file_encoding="utf-8")

    # Root for run directories - can be set via LPP_LAB_DATA_DIR
    data_dir: Path = Path(__file__).parent.parent / "data"

    def run_dir(self, experiment: str) -> Path:
        """Default output directory for an experiment."""
        return self.data_dir / experiment

    # App settings
    app_name: str = "LPP Lab"
    debug: bool = False
    log_level: str = "INFO"

    # Default worker count (LPP_LAB_THREADS)
    threads: int = 1

    # Samples per chunk (unit of scheduling and resume)
    chunk_size: int = 64

    # Batch-means batches for standard errors
    batch_count: int = 50

    # Largest box stored as a full grid (cells); beyond it surfaces are checkpointed
    full_grid_max_cells: int = 2**24

    # Antidiagonals between checkpoints
    checkpoint_interval: int = 1024


settings = Settings()
