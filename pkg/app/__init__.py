import logging

from flask import Flask, jsonify

from config import config


def configure_logging(app):
    level = getattr(logging, str(app.config.get('LOG_LEVEL', 'INFO')).upper(), logging.INFO)
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    logging.getLogger('app').setLevel(level)


def create_app(config_name='default'):
    app = Flask(__name__)
    app.config.from_object(config[config_name])
    config[config_name].init_app(app)
    configure_logging(app)

    from app.reports import reports as reports_blueprint
    app.register_blueprint(reports_blueprint, url_prefix='/reports')

    # Error Handlers
    @app.errorhandler(404)
    def not_found(error):
        return jsonify(error='not found'), 404

    @app.errorhandler(500)
    def internal_server_error(error):
        return jsonify(error='internal error'), 500

    return app
