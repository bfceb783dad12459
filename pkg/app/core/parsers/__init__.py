"""
文件解析器包
"""

from .network_parser import network_parser, load_tntp, load_resources, write_network

__all__ = [
    'network_parser',
    'load_tntp',
    'load_resources',
    'write_network'
]
