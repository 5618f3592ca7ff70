from collections import OrderedDict
import os


__all__ = ["ArtifactPlan"]


class ArtifactPlan:
    def __init__(self, name):
        """A set of output files produced by one command.

        Parameters
        ----------
        name : str
            Name of the command producing the files.
        """
        self.name  = name
        self.files = OrderedDict()

    def add_file(self, filename, content):
        """
        Add ``content``, which can be a :class:`str` or :class:`bytes`, to the plan as
        ``filename``. The file name can be a relative path with directories separated by
        forward slashes (``/``).
        """
        if not isinstance(filename, str):
            raise TypeError("File name must be a string, not {!r}"
                            .format(filename))
        if not isinstance(content, (str, bytes)):
            raise TypeError("File contents must be str or bytes, not {!r}"
                            .format(content))
        if filename in self.files:
            raise ValueError("File {!r} already exists"
                             .format(filename))
        self.files[filename] = content

    def write(self, root):
        """
        Place every file of the plan under the directory ``root``, creating directories as
        needed. Text is written as UTF-8 with LF line endings. Returns the written paths.
        """
        os.makedirs(root, exist_ok=True)
        paths = []
        for filename, content in self.files.items():
            filename = os.path.normpath(filename)
            # Never write outside of the output root.
            assert not filename.startswith("..") and not os.path.isabs(filename)
            path = os.path.join(root, filename)
            dirname = os.path.dirname(path)
            if dirname:
                os.makedirs(dirname, exist_ok=True)
            if isinstance(content, str):
                with open(path, "w", encoding="utf-8", newline="\n") as f:
                    f.write(content)
            else:
                with open(path, "wb") as f:
                    f.write(content)
            paths.append(path)
        return paths
