from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from typing import Optional


class Settings(BaseSettings):
	data_root: str = Field("data", alias="NEUROATTACK_DATA_ROOT")
	out_dir: str = Field("runs", alias="NEUROATTACK_OUT_DIR")
	config_file: Optional[str] = Field(None, alias="NEUROATTACK_CONFIG")
	log_level: str = Field("INFO", alias="NEUROATTACK_LOG_LEVEL")
	eval_batch: int = Field(1000, alias="NEUROATTACK_EVAL_BATCH", ge=1)

	model_config = SettingsConfigDict(
		env_file=".env",
		env_file_encoding="utf-8",
		case_sensitive=False,
	)


settings = Settings()
