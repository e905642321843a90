import subprocess

from flask import Flask, abort, request

app = Flask(__name__)

ALLOWED_COMMANDS = {
    'date': 'date',
    'uptime': 'uptime',
}


@app.route('/execute')
def executeCommand():
    command_key = request.args.get('command')
    if command_key not in ALLOWED_COMMANDS:
        abort(403)  # Forbidden
    command = ALLOWED_COMMANDS[command_key]
    result = subprocess.check_output(command.split(), stderr=subprocess.STDOUT)
    return result.decode()
