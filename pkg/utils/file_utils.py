"""
File utilities for Drone FDI Lab
Provides functions for reading/writing scenario, calibration and image files
"""

import os
import json
from pathlib import Path
from typing import Dict, Any, Union

import numpy as np

from config import logger

PathLike = Union[str, Path]


def ensure_dir_exists(directory_path: PathLike) -> None:
    """
    Ensure a directory exists, creating it if needed

    Args:
        directory_path: Path to directory
    """
    if directory_path in ("", None):
        return
    os.makedirs(directory_path, exist_ok=True)
    logger.debug(f"Ensured directory exists: {directory_path}")


def load_json_file(file_path: PathLike, default_value: Any = None) -> Any:
    """
    Load data from a JSON file with error handling

    Args:
        file_path: Path to JSON file
        default_value: Value to return if file doesn't exist or has an error

    Returns:
        Data from JSON file or default value
    """
    try:
        if not os.path.exists(file_path):
            logger.warning(f"File not found: {file_path}, returning default value")
            return default_value

        with open(file_path, 'r') as f:
            data = json.load(f)
        logger.debug(f"Loaded JSON file: {file_path}")
        return data
    except json.JSONDecodeError:
        logger.error(f"Invalid JSON in file: {file_path}")
        return default_value
    except Exception as e:
        logger.error(f"Error loading file {file_path}: {str(e)}")
        return default_value


def save_json_file(file_path: PathLike, data: Any, indent: int = 2, raise_errors: bool = False) -> bool:
    """
    Save data to a JSON file with error handling

    Args:
        file_path: Path to JSON file
        data: Data to save
        indent: Indentation for JSON formatting
        raise_errors: Re-raise I/O errors instead of returning False

    Returns:
        bool: True if successful, False otherwise
    """
    try:
        ensure_dir_exists(os.path.dirname(str(file_path)))

        with open(file_path, 'w') as f:
            json.dump(data, f, indent=indent)
        logger.debug(f"Saved JSON file: {file_path}")
        return True
    except Exception as e:
        logger.error(f"Error saving file {file_path}: {str(e)}")
        if raise_errors:
            raise
        return False


def merge_json_data(original: Dict, updates: Dict) -> Dict:
    """
    Recursively merge two dictionaries

    Args:
        original: Original dictionary
        updates: Dictionary with updates

    Returns:
        Merged dictionary
    """
    if not isinstance(original, dict) or original is None:
        return updates

    if not isinstance(updates, dict) or updates is None:
        return original

    # Copy so neither input is modified
    result = original.copy()

    for key, value in updates.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = merge_json_data(result[key], value)
        else:
            result[key] = value

    return result


def save_pgm(file_path: PathLike, pixels: np.ndarray) -> None:
    """
    Write an 8-bit grayscale image as binary PGM (P5)

    Args:
        file_path: Destination path
        pixels: (height, width) uint8 array
    """
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {pixels.shape}")
    ensure_dir_exists(os.path.dirname(str(file_path)))
    height, width = pixels.shape
    with open(file_path, 'wb') as f:
        f.write(f"P5\n{width} {height}\n255\n".encode('ascii'))
        f.write(pixels.tobytes())
    logger.debug(f"Saved PGM file: {file_path}")


def load_pgm(file_path: PathLike) -> np.ndarray:
    """
    Read a binary PGM (P5) written by save_pgm

    Args:
        file_path: Source path

    Returns:
        (height, width) uint8 array
    """
    with open(file_path, 'rb') as f:
        raw = f.read()

    # Header is four whitespace-separated tokens: magic, width, height, maxval
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1

    if tokens[0] != b'P5':
        raise ValueError(f"Not a binary PGM file: {file_path}")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"Only 8-bit PGM is supported, maxval={maxval}")
    data = np.frombuffer(raw[pos:pos + width * height], dtype=np.uint8)
    return data.reshape(height, width).copy()
