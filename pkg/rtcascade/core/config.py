"""
Python module to read the parameters specified in the configuration files.
"""
from __future__ import annotations

import ast
import os
from configparser import ConfigParser
from typing import Any, TypeVar

from pydantic import BaseModel, ValidationError

from rtcascade.core.exc import ConfigurationError

ENV_PREFIX = "RTC_"

ModelT = TypeVar("ModelT", bound=BaseModel)


def env_var_name(key: str) -> str:
    """Name of the environment variable that overrides the config key `key`."""
    return "{}{}".format(ENV_PREFIX, key.replace(".", "_")).upper()


def read_config(filename: str, section: str) -> dict[str, Any]:
    """Read a section from a .ini file and return a dictionary with the parameters.

    Overrides any values from the file with ones read from environment variables, if
    set.
    """
    # check that configuration file exists
    if not os.path.isfile(filename):
        raise ConfigurationError(f"File {filename} does not exist")

    parser = ConfigParser()
    # keep the case of keys, dotted run-config keys are case sensitive
    parser.optionxform = str  # type: ignore[assignment, method-assign]
    parser.read(filename, encoding="utf-8-sig")

    conf_dict = {}
    if parser.has_section(section):
        for key, raw in parser.items(section):
            try:
                # use ast.literal_eval to convert a string to a Python literal structure
                conf_dict[key] = ast.literal_eval(raw)
            except (ValueError, SyntaxError) as e:
                raise ConfigurationError(
                    f"Error while parsing '{key}' in {filename}: {e}"
                ) from e
    else:
        raise ConfigurationError(
            "Section {0} not found in the {1} file".format(section, filename)
        )

    # If the same variable is defined also as an environment variable, have that
    # override the value in the file.
    # Note that the environment variable must follow this structure:
    # RTC_VARIABLENAME
    for key in conf_dict.keys():
        env_var = env_var_name(key)
        if env_var in os.environ:
            conf_dict[key] = ast.literal_eval(os.environ[env_var])
    return conf_dict


def default_file(module_file: str, filename: str) -> str:
    """Path of an .ini file shipped next to the module `module_file`."""
    return os.path.join(os.path.dirname(os.path.realpath(module_file)), filename)


def validation_message(error: ValidationError) -> str:
    """Flatten a pydantic ValidationError into one line per offending field."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def build_config(config_class: type[ModelT], **values: Any) -> ModelT:
    """Instantiate a pydantic config model, raising ConfigurationError on failure."""
    try:
        return config_class(**values)
    except ValidationError as e:
        raise ConfigurationError(
            f"Invalid {config_class.__name__}: {validation_message(e)}"
        ) from e
