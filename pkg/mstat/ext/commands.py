from mstat.util.exceptions import UsageError

def _default(client, args):
    raise UsageError(f"unknown command {args.command!r}, try help")

def _help(client, args):
    """
    List commands
    """
    _help = "commands:\n"

    for name in sorted(client.commands):
        command = client.commands[name]
        _help += f"  {command.name:<14}{command.help.strip().splitlines()[0] if command.help else 'no docstring'}\n"

    print(_help, end = "")

class Command:
    def __init__(self, method, name):
        self.method = method
        self.name = name
        self.help = self.method.__doc__

    def __call__(self, client, args):
        self.method(client, args)
        return self

class Defaults:

    help = Command(_help, "help")

    default = Command(_default, "default")
