from pydantic_settings import BaseSettings, SettingsConfigDict

class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8")

    LOG_LEVEL: str = "INFO"
    LOG_FILE: str = "data/logs/file.log"

    OUTPUT_DIR: str = "data/runs"
    DEFAULT_CONFIG: str = "config/default.conf"
    DEFAULT_POTENTIAL: str = "data/default.potential"
    GOLDEN_DIR: str = "data/golden"

    THREADS: int | None = None
    SEED: int = 20240611

    WORD_CACHE_LENGTH: int = 4
    REDUCTION_MARGIN: float = 2.0

settings = Settings()
