from django.apps import AppConfig


class KgTransferConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'kg_transfer'
    verbose_name = 'Knowledge Graph Transfer'
