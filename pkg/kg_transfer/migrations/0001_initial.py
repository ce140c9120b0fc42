from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(help_text='Management command that produced the run', max_length=32)),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('seed', models.IntegerField(blank=True, null=True)),
                ('mode', models.CharField(blank=True, default='', max_length=16)),
                ('label', models.CharField(blank=True, default='', max_length=255)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('arguments', models.JSONField(blank=True, default=dict)),
                ('input_digests', models.JSONField(blank=True, default=dict, help_text='sha256 per input path')),
                ('out_dir', models.CharField(blank=True, default='', max_length=1024)),
                ('artifacts', models.JSONField(blank=True, default=dict)),
                ('best_metrics', models.JSONField(blank=True, null=True)),
                ('selection_score', models.FloatField(blank=True, null=True)),
                ('tool_version', models.CharField(blank=True, default='', max_length=32)),
                ('error_message', models.TextField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'verbose_name': 'Training Run',
                'verbose_name_plural': 'Training Runs',
                'ordering': ['-created_at'],
            },
        ),
    ]
