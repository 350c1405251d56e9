from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """进程级配置，可由环境变量（前缀 AXLOB_）或 .env 文件覆盖"""
    # 日志
    LOG_LEVEL: str = "INFO"

    # 输出
    OUTPUT_DIRECTORY: str = "runs"          # train/search 未指定输出目录时使用
    CHECKPOINT_NAME: str = "best.axlob"     # 最优验证损失检查点文件名
    INITIAL_CHECKPOINT_NAME: str = "initial.axlob"
    METRICS_LOG_NAME: str = "metrics.jsonl"
    RUN_CONFIG_NAME: str = "run_config.conf"

    # 推理
    EVAL_BATCH_SIZE: int = 256

    model_config = SettingsConfigDict(env_prefix="AXLOB_", env_file=".env", extra="ignore")


settings = Settings()  # 创建配置实例
