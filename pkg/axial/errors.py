"""
异常定义

所有异常都携带 exit_code，命令行入口据此决定进程退出码：
0 成功，2 配置错误，3 数据错误，4 数值发散。
"""


class AxlobError(Exception):
    """项目内所有异常的基类"""
    exit_code: int = 1


class ConfigError(AxlobError, ValueError):
    """配置不合法（参数取值、整除关系、未知配置项等）"""
    exit_code = 2


class ShapeError(AxlobError, ValueError):
    """张量形状或轴不匹配"""
    exit_code = 2


class TapeError(AxlobError, RuntimeError):
    """反向传播契约被破坏（非标量loss、计算图已被消费等）"""


class TargetIndexError(AxlobError, IndexError):
    """类别标签超出 [0, C) 范围"""
    exit_code = 3


class DataError(AxlobError, ValueError):
    """输入数据错误"""
    exit_code = 3


class BookValidationError(DataError):
    """订单簿不合法：买卖价交叉或档位价格不单调"""

    def __init__(self, message: str, event_index: int = None):
        super().__init__(message)
        self.event_index = event_index


class HorizonBoundaryError(DataError, IndexError):
    """预测窗口超出序列边界"""


class CheckpointFormatError(DataError):
    """检查点文件损坏、截断或版本不符"""


class CheckpointMismatchError(ConfigError):
    """检查点与目标模型配置不一致"""


class EmptyInputError(DataError):
    """输入为空"""


class DivergenceError(AxlobError, ArithmeticError):
    """训练过程中出现 NaN/Inf"""
    exit_code = 4

    def __init__(self, message: str, snapshot_path: str = None):
        super().__init__(message)
        self.snapshot_path = snapshot_path


class FileAccessError(DataError):
    """文件无法读写（权限不足、路径是目录、磁盘已满等）"""
