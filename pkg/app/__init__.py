"""
Edge Kernel Lab Application Package
"""
