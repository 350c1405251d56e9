from typing import Any, Optional

from pydantic import BaseModel


class ResponseModel(BaseModel):
    """命令行输出信封，成功与失败都写成单行 JSON"""
    code: int
    message: str
    data: Optional[Any] = None
    error_code: Optional[int] = None
    error_message: Optional[str] = None

    def to_line(self) -> str:
        return self.model_dump_json(exclude_none=True)


def success(message: str, data: Any = None) -> ResponseModel:
    return ResponseModel(code=0, message=message, data=data)


def failure(error: BaseException, exit_code: int) -> ResponseModel:
    message = " ".join(str(error).split())
    return ResponseModel(
        code=exit_code,
        message="failed",
        error_code=exit_code,
        error_message=f"{type(error).__name__}: {message}",
    )
