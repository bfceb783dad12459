"""
流网络消息传递求解套件
"""
__version__ = "0.1.0"
