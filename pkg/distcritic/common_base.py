#!/usr/bin/env python3

""" DistCritic - Common Base Classes
    The error family, a writer that keeps a backup until it succeeds, and
    the dict-like base of every config file.
"""

import os
import pathlib
import shutil
from collections import UserDict


class _NotSet(object):
    """ Sentinel for missing values where None is a legal value. """
    def __bool__(self):
        return False

    def __repr__(self):
        return '<NotSet>'

    __str__ = __repr__


NotSet = _NotSet()


class dcError(Exception):

    """ DistCritic base exception """

    def __init__(self, message):
        super(dcError, self).__init__(message)


class dcValueError(dcError, ValueError):

    """ Invalid argument error """
    pass


class dcStateError(dcError, RuntimeError):

    """ Operation called in the wrong state """
    pass


class dcResourceError(dcError):

    """ Instance too large for an exact computation """
    pass


class dcConfigError(dcValueError):

    """ Invalid run configuration """
    pass


class dcDivergenceError(dcError):

    """ A loss became NaN or infinite during training """

    def __init__(self, message, diagnostics=None):
        super(dcDivergenceError, self).__init__(message)
        self.diagnostics = dict(diagnostics or {})


def preferred_file(filenames):
    """ Pick a config file name.
        A str or Path is used as-is. For any other iterable, the first
        existing file wins, falling back to the first candidate.
        None (or an empty value) gives None.
    """
    if not filenames:
        return None
    if isinstance(filenames, (str, pathlib.PurePath)):
        return str(filenames)
    try:
        candidates = [str(name) for name in filenames]
    except TypeError:
        raise TypeError(
            'Expected a str, a pathlib.Path, or an iterable of them, '
            'got: {}'.format(type(filenames).__name__)
        ) from None
    existing = (name for name in candidates if os.path.exists(name))
    return next(existing, candidates[0] if candidates else None)


def _apply_item_hook(hook, data):
    """ Run a per-item (key, value) -> (key, value) hook over a mapping. """
    return dict(hook(key, value) for key, value in data.items())


class ConfigBase(UserDict):
    """ Base class for file-backed configs. Keys double as attributes, and
        the type of every default value is remembered so `check_types()`
        can enforce it later.
        Subclasses provide `format_module()` (anything with load/dump).
    """
    # Real attributes, never routed into `data`.
    _own_attrs = ('data', 'defaults', 'filename')

    def __init__(self, iterable=None, filename=None, **kwargs):
        initial = iterable or kwargs
        self.data = self.load_hook(dict(initial)) if initial else {}
        self.filename = preferred_file(filename)
        self.defaults = {}
        self.set_defaults(self.data)

    def __bool__(self):
        return bool(self.data)

    def __getattr__(self, key):
        # Only reached when normal attribute lookup fails.
        data = self.__dict__.get('data', {})
        if key not in data:
            raise AttributeError('{} has no attribute {}.'.format(
                type(self).__name__,
                key,
            ))
        return data[key]

    def __setattr__(self, key, value):
        data = self.__dict__.get('data')
        is_key = (
            data is not None and
            key in data and
            key not in self._own_attrs and
            not hasattr(type(self), key)
        )
        if is_key:
            data[key] = value
        else:
            super(ConfigBase, self).__setattr__(key, value)

    def add_file(self, filename, optional=True):
        """ Merge the keys of another config file into this one. A missing
            file is skipped, unless `optional` is False.
        """
        filename = str(filename)
        if not os.path.exists(filename):
            if optional:
                return self
            raise FileNotFoundError(
                'Required config file does not exist: {}'.format(filename)
            )
        return self.merge(self.read_file(filename))

    def check_types(self):
        """ Raise dcConfigError for keys whose value type differs from the
            type of the remembered default. None defaults accept anything,
            and ints are accepted where floats are expected.
        """
        for key, expected in self.defaults.items():
            val = self.data.get(key)
            if val is None or expected is type(None):
                continue
            if expected is float and isinstance(val, int) and \
                    not isinstance(val, bool):
                continue
            if not isinstance(val, expected):
                raise dcConfigError(
                    'Config key {!r} expects {}, got: {!r}'.format(
                        key,
                        expected.__name__,
                        val,
                    )
                )

    @classmethod
    def format_module(cls, filename):
        raise NotImplementedError(
            '{} does not know a file format.'.format(cls.__name__)
        )

    @classmethod
    def from_file(cls, filename):
        """ New config loaded from `filename`. Open and decode errors are
            not caught.
        """
        return cls(filename=filename).load()

    def get(self, option, default=NotSet):
        """ dict.get(), except a missing key with no default raises
            KeyError.
        """
        val = self.data.get(option, NotSet)
        if val is not NotSet:
            return val
        if default is NotSet:
            raise KeyError('No config key named: {}'.format(option))
        return default

    def load(self, filename=None):
        """ Update this config from a file. Keys in the file win. """
        if filename:
            self.filename = preferred_file(filename)
        if not self.filename:
            raise ValueError('No config file name was given.')
        self.data.update(self.read_file(self.filename))
        return self

    def read_file(self, filename):
        """ Decoded, hooked keys of one file, without touching self.data.
            Open and decode errors are not caught.
        """
        with open(filename, 'r') as f:
            data = self.format_module(filename).load(f)
        # Empty documents decode to None.
        data = {} if data is None else data
        if not isinstance(data, dict):
            raise dcConfigError(
                'Config must be a mapping, got: {}'.format(
                    type(data).__name__,
                )
            )
        return self.load_hook(data)

    def load_hook(self, data):
        """ Called on decoded data before it is stored. """
        return _apply_item_hook(self.load_item_hook, data)

    def load_item_hook(self, key, value):
        return key, value

    def merge(self, other):
        """ Copy the keys of another mapping into this one, overwriting. """
        items = getattr(other, 'items', None)
        if not callable(items):
            raise TypeError('Can only merge mappings into {}, got: {}'.format(
                type(self).__name__,
                type(other).__name__,
            ))
        for key, val in items():
            self[key] = val
        return self

    def save(self, filename=None):
        """ Encode this config through `format_module()`. The old file is
            kept as a backup until the write succeeds.
            Returns the file name.
        """
        if filename:
            self.filename = str(filename)
        if not self.filename:
            raise ValueError('No config file name was given.')
        fmt = self.format_module(self.filename)
        with BackedUpWriter(self.filename) as f:
            fmt.dump(self.save_hook(self.data), f)
        return self.filename

    def save_hook(self, data):
        """ Called on self.data before encoding. """
        return _apply_item_hook(self.save_item_hook, data)

    def save_item_hook(self, key, value):
        return key, value

    def set_defaults(self, default_config):
        """ Remember the value types of `default_config`. """
        self.defaults = {key: type(val) for key, val in default_config.items()}


class BackedUpWriter(object):
    """ Context manager for writing a file in place.
        An existing file is copied to a backup first. On success the backup
        is removed; on error it is moved back over the partial file. A file
        that did not exist before is removed again on error.
    """
    def __init__(self, filename, fmt='{}~', mode='w'):
        self.filename = str(filename)
        self.fmt = fmt or '{}~'
        self.mode = mode
        self.file = None
        self.filename_backup = None

    def __enter__(self):
        if os.path.exists(self.filename):
            self.filename_backup = self.fmt.format(self.filename)
            shutil.copy2(self.filename, self.filename_backup)
        self.file = open(self.filename, self.mode)
        return self.file

    def __exit__(self, typ, val, trace):
        if self.file is not None and not self.file.closed:
            self.file.close()
        failed = val is not None
        if self.filename_backup is not None:
            if failed:
                shutil.move(self.filename_backup, self.filename)
            else:
                os.remove(self.filename_backup)
        elif failed and os.path.exists(self.filename):
            os.remove(self.filename)
        # Exceptions propagate.
        return False
